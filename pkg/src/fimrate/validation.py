"""Self-check suites run by ``fimrate validate``.

Each check compares an analytic quantity against an independent estimate
(finite differences, Monte-Carlo sampling, brute-force search) and reports a
scalar error against a fixed threshold.  ``level`` scales instance counts and
sample sizes; thresholds do not change with level.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .channel_mc import MultipathSpec, empirical_covariance, sample_channels
from .correlation import build_sigma_fim
from .estimation import PilotConfig, lmmse_bundle, simulate_pilot_estimation
from .morph import (AlState, MorphProblem, augmented_objective, grad_augmented, grad_rate,
                    grad_trace_sigma_hat)
from .power import (build_sinr_coefficients, rates_hat, sca_loop, solve_sca_subproblem,
                    surrogate_rate, feasibility_phase)
from .rate import interference_powers, mc_uatf_rate, rates, signal_powers
from .scenario import ScenarioParams, build_scenario

LEVELS = ("quick", "full")

# instance counts / sample sizes per level
_SIZES = {
    "quick": {"grad_instances": 8, "cov_draws": 20_000, "lmmse_draws": 20_000,
              "rate_samples": 40_000, "dom_points": 200, "sca_seeds": 8, "grid": 401},
    "full": {"grad_instances": 50, "cov_draws": 100_000, "lmmse_draws": 100_000,
             "rate_samples": 100_000, "dom_points": 1000, "sca_seeds": 50, "grid": 2001},
}

GRAD_TOL = 1e-5
COV_TOL = 0.05
RATE_TOL = 0.03
TIGHT_TOL = 1e-12
FD_STEP_WAVELENGTHS = 1e-3


@dataclass
class CheckResult:
    name: str
    passed: bool
    error: float
    threshold: float
    detail: dict = field(default_factory=dict)
    seconds: float = 0.0


@dataclass
class Report:
    level: str
    checks: list

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failed(self) -> list:
        return [c.name for c in self.checks if not c.passed]

    def to_dict(self) -> dict:
        return {"level": self.level, "passed": self.passed, "failed": self.failed,
                "checks": [asdict(c) for c in self.checks]}


def _small_params(base: ScenarioParams, n_side: tuple, k: int) -> ScenarioParams:
    return replace(base, n_x=n_side[0], n_z=n_side[1], n_users=k, tau=None, noise_dbm_override=None)


def random_instance(base: ScenarioParams, n_side: tuple, k: int, rng: np.random.Generator):
    """A small problem with a random morph in the box and a random in-budget power."""
    params = _small_params(base, n_side, k)
    sc = build_scenario(params, int(rng.integers(2**31)), 0)
    problem = sc.problem()
    y = rng.uniform(0.0, problem.geometry.y_max, problem.geometry.n_elements)
    ctx = problem.context(y)
    w = rng.uniform(0.2, 1.0, k)
    p = w / ctx.traces
    p *= rng.uniform(0.3, 1.0) * problem.p_max / float(p @ ctx.traces)
    return problem, y, p


def _rel(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


def finite_difference(fun, y: np.ndarray, h: float, order: int = 4) -> np.ndarray:
    """Central differences of a vector-valued ``fun`` along every coordinate, shape (N, ...).

    ``order=4`` uses the five-point stencil, which tolerates the larger step
    needed when the derivative is small next to the function value.
    """
    if order not in (2, 4):
        raise ValueError("order must be 2 or 4")
    out = []
    for n in range(y.size):
        e = np.zeros_like(y)
        e[n] = h
        d1 = (np.asarray(fun(y + e)) - np.asarray(fun(y - e))) / (2.0 * h)
        if order == 4:
            d2 = (np.asarray(fun(y + 2 * e)) - np.asarray(fun(y - 2 * e))) / (4.0 * h)
            d1 = (4.0 * d1 - d2) / 3.0
        out.append(d1)
    return np.array(out)


def check_gradients(base: ScenarioParams, n_instances: int, seed: int, corrupt: bool = False) -> CheckResult:
    """Analytic morph gradients of tr(Sigma_hat_k), R_k and F versus central differences."""
    rng = np.random.default_rng(seed)
    sides = [(3, 3), (4, 4), (5, 5)]
    worst = {"trace": 0.0, "rate": 0.0, "augmented": 0.0}
    for i in range(n_instances):
        k = int(rng.integers(1, 4))
        problem, y, p = random_instance(base, sides[i % len(sides)], k, rng)
        state = AlState(nu=rng.uniform(0.0, 1.0, k + 1), rho=float(rng.uniform(0.1, 1.0)),
                        eps=np.zeros(k + 1))
        ctx = problem.context(y)
        eps = np.abs(rng.normal(0.0, 0.1, k + 1))
        h = FD_STEP_WAVELENGTHS * problem.wavelength

        def values(yy):
            c = problem.context(yy)
            return np.concatenate([c.traces, rates(p, c),
                                   [augmented_objective(c, p, eps, state, problem.p_max, problem.r_min)]])

        fd = finite_difference(values, y, h)
        an_tr = np.array([grad_trace_sigma_hat(problem, y, j) for j in range(k)]).T
        an_r = np.array([grad_rate(problem, y, j, p) for j in range(k)]).T
        an_f = grad_augmented(problem, y, eps, state, p)
        if corrupt:
            an_r = an_r * (1.0 + 1e-3)
        worst["trace"] = max(worst["trace"], _rel(an_tr, fd[:, :k]))
        worst["rate"] = max(worst["rate"], _rel(an_r, fd[:, k:2 * k]))
        worst["augmented"] = max(worst["augmented"], _rel(an_f, fd[:, -1]))
        del ctx
    err = max(worst.values())
    return CheckResult("gradients", err < GRAD_TOL, err, GRAD_TOL,
                       detail={"instances": n_instances, **worst})


def check_channel_covariance(base: ScenarioParams, draws: int, seed: int) -> CheckResult:
    """Multipath samples (64 paths) against the sinc covariance model."""
    sc = build_scenario(_small_params(base, (2, 4), 1), seed, 0)
    geo = sc.geometry.with_morph(np.random.default_rng(seed).uniform(0, sc.geometry.y_max, 8))
    gain = 1.0
    samples = sample_channels(geo, MultipathSpec(64, gain), draws, seed=seed)
    target = gain * build_sigma_fim(geo)
    err = float(np.linalg.norm(empirical_covariance(samples) - target) / np.linalg.norm(target))
    return CheckResult("channel_covariance", err < COV_TOL, err, COV_TOL,
                       detail={"draws": draws, "paths": 64, "elements": 8})


def check_lmmse(base: ScenarioParams, draws: int, seed: int) -> CheckResult:
    """Sampled estimate covariance and estimate/error orthogonality."""
    sc = build_scenario(_small_params(base, (2, 4), 1), seed, 0)
    sigma = build_sigma_fim(sc.geometry) * sc.users[0].element_gain
    pilot = PilotConfig(tau=sc.tau, p_train=sc.p_train, noise_power=sc.pilot_noise)
    # raise the pilot noise so the estimation error is not negligible
    pilot = replace(pilot, p_train=pilot.p_train * 1e-4)
    bundle = lmmse_bundle(sigma, pilot)
    mom = simulate_pilot_estimation(sigma, pilot, draws, seed)
    scale = np.linalg.norm(bundle.sigma_hat)
    hat_err = float(np.linalg.norm(mom.hat_cov - bundle.sigma_hat) / scale)
    cross = float(np.linalg.norm(mom.cross_cov) / scale)
    err = max(hat_err, cross)
    return CheckResult("lmmse", err < COV_TOL, err, COV_TOL,
                       detail={"draws": draws, "hat_cov_rel": hat_err, "cross_rel": cross})


def check_rate_closed_form(base: ScenarioParams, samples: int, seed: int) -> CheckResult:
    """Closed-form signal and interference terms against direct sampling."""
    params = _small_params(base, (2, 4), 2)
    sc = build_scenario(params, seed, 0)
    problem = replace(sc.problem(), interference="uatf")
    ctx = problem.context(sc.geometry.y)
    p = np.full(2, sc.p_max / ctx.traces.sum())
    mc = mc_uatf_rate(ctx, p, samples, seed)
    s_err = _rel_vec(signal_powers(p, ctx), mc.signal)
    i_err = _rel_vec(interference_powers(p, ctx), mc.interference)
    err = max(s_err, i_err)
    return CheckResult("rate_closed_form", err < RATE_TOL, err, RATE_TOL,
                       detail={"samples": samples, "signal_rel": s_err, "interference_rel": i_err})


def _rel_vec(closed, sampled) -> float:
    return float(np.max(np.abs(closed - sampled) / np.abs(sampled)))


def _power_instance(base: ScenarioParams, k: int, seed: int):
    sc = build_scenario(_small_params(base, (4, 4), k), seed, 0)
    problem = sc.problem()
    ctx = problem.context(sc.geometry.y)
    return build_sinr_coefficients(ctx), problem


def check_surrogate(base: ScenarioParams, n_points: int, n_seeds: int, grid: int, seed: int) -> CheckResult:
    """Tightness at the anchor, global minorization, SCA monotonicity and a K=2 grid search."""
    rng = np.random.default_rng(seed)
    coeffs, problem = _power_instance(base, 4, seed)
    pm, tb = problem.p_max, problem.prelog
    anchor = rng.dirichlet(np.ones(4)) * pm * rng.uniform(0.2, 1.0)
    gap = float(np.max(np.abs(surrogate_rate(anchor, anchor, coeffs, tb) - rates_hat(anchor, coeffs, tb))))
    pts = rng.dirichlet(np.ones(4), n_points) * pm * rng.uniform(0.0, 1.0, (n_points, 1))
    viol = max(float(np.max(surrogate_rate(x, anchor, coeffs, tb) - rates_hat(x, coeffs, tb)))
               for x in pts)

    drops = 0.0
    for s in range(n_seeds):
        c, pr = _power_instance(base, 3, seed + 1 + s)
        start = feasibility_phase(c, pr.p_max, pr.r_min, pr.prelog)
        if not start.feasible:
            continue
        traj = np.array(sca_loop(start.p_hat, c, pr.p_max, pr.r_min, pr.prelog).trajectory)
        drops = max(drops, float(np.max(-np.diff(traj), initial=0.0)))

    grid_gap = _grid_gap(base, grid, seed)
    ok = gap <= TIGHT_TOL and viol <= TIGHT_TOL and drops == 0.0 and grid_gap <= 0.0
    return CheckResult("surrogate", ok, max(gap, viol, drops, grid_gap), TIGHT_TOL,
                       detail={"anchor_gap": gap, "max_minorant_violation": viol,
                               "max_sca_decrease": drops, "grid_excess": grid_gap})


def grid_search_subproblem(anchor, coeffs, p_max: float, r_min, prelog: float, grid: int):
    """Brute-force the two-user surrogate subproblem on a ``grid x grid`` lattice.

    Returns ``(grid_best, axis, objective, feasible)`` where ``objective`` and
    ``feasible`` are lattice arrays over ``axis x axis`` (watts of radiated
    power per user).  ``grid_best`` is ``-inf`` if no lattice point is feasible.
    """
    u = np.linspace(0.0, 1.0, grid) * p_max
    x1, x2 = np.meshgrid(u, u, indexing="ij")
    pts = np.stack([x1, x2], axis=-1)
    anchor = np.asarray(anchor, dtype=float)
    den0 = coeffs.psi_bar @ anchor + coeffs.noise
    num = coeffs.psi * pts + pts @ coeffs.psi_bar.T + coeffs.noise
    lin = ((pts - anchor) @ coeffs.psi_bar.T) / den0
    vals = prelog * (np.log(num) - np.log(den0) - lin)
    total = vals.sum(axis=-1)
    r = np.broadcast_to(np.asarray(r_min, dtype=float), (2,))
    qos = (vals >= r - 1e-12) | (r <= 0)      # users without a target are unconstrained
    feas = np.all(qos, axis=-1) & (pts.sum(axis=-1) <= p_max)
    if not np.any(feas):
        return -np.inf, np.inf, total, feas
    return float(total[feas].max()), u, total, feas


def _grid_gap(base: ScenarioParams, grid: int, seed: int) -> float:
    """Disagreement between the subproblem optimum and a brute-force grid.

    Zero when no feasible grid point beats the solution by more than 1e-9 and
    the solution beats the best grid point by no more than the objective
    variation over the cells around the optimum.
    """
    coeffs, problem = _power_instance(replace(base, r_min_bps_hz=0.2), 2, seed)
    pm, tb, r = problem.p_max, problem.prelog, problem.r_min
    anchor = np.array([0.4, 0.4]) * pm
    sol = solve_sca_subproblem(anchor, coeffs, pm, r, tb)
    return grid_disagreement(sol.p_hat, anchor, coeffs, pm, r, tb, grid)


def grid_disagreement(p_hat, anchor, coeffs, p_max: float, r_min, prelog: float, grid: int) -> float:
    """Positive excess of |solution - grid optimum| over the grid resolution."""
    best = float(surrogate_rate(p_hat, anchor, coeffs, prelog).sum())
    grid_best, u, total, feas = grid_search_subproblem(anchor, coeffs, p_max, r_min, prelog, grid)
    if not np.isfinite(grid_best):
        return 0.0
    if grid_best > best + 1e-9:
        return float(grid_best - best)      # the grid found a strictly better point
    i = int(np.clip(np.searchsorted(u, p_hat[0]), 1, grid - 1))
    j = int(np.clip(np.searchsorted(u, p_hat[1]), 1, grid - 1))
    cell = total[max(i - 2, 0):i + 2, max(j - 2, 0):j + 2]
    resolution = float(cell.max() - cell.min()) + 1e-12
    excess = best - grid_best - resolution
    return float(excess) if excess > 0 else 0.0


def run_validation(base: ScenarioParams | None = None, level: str = "quick", seed: int = 0,
                   faults: frozenset | set = frozenset()) -> Report:
    """Run every suite.  ``faults`` may contain ``"gradient"`` to corrupt the analytic gradient."""
    if level not in LEVELS:
        raise ValueError(f"level must be one of {LEVELS}")
    base = base or ScenarioParams()
    sz = _SIZES[level]
    suites = [
        lambda: check_gradients(base, sz["grad_instances"], seed, corrupt="gradient" in faults),
        lambda: check_channel_covariance(base, sz["cov_draws"], seed),
        lambda: check_lmmse(base, sz["lmmse_draws"], seed),
        lambda: check_rate_closed_form(base, sz["rate_samples"], seed),
        lambda: check_surrogate(base, sz["dom_points"], sz["sca_seeds"], sz["grid"], seed),
    ]
    checks = []
    for suite in suites:
        t0 = time.perf_counter()
        res = suite()
        res.seconds = round(time.perf_counter() - t0, 3)
        checks.append(res)
    return Report(level=level, checks=checks)
