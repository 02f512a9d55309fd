"""Power allocation for a fixed morph by successive convex approximation.

The optimization variable is the radiated power per user ``p_hat_k = p_k tr(Sigma_hat_k)``,
which turns the budget into ``sum(p_hat) <= p_max`` and the SINR into

    gamma_k = psi_k p_hat_k / (psi_bar_k . p_hat + sigma_k^2).

Each rate is a difference of two logs of affine forms; linearizing the second
log at the current iterate gives a concave minorant that is tight there.  The
resulting convex subproblem is solved with :func:`fimrate.barrier.barrier_maximize`.

Internally powers are scaled by ``p_max`` and every SINR by its noise power so
the Newton systems are well conditioned.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .barrier import barrier_maximize
from .rate import RateContext

log = logging.getLogger(__name__)

POSITIVITY_FLOOR = 1e-12  # fraction of p_max


class InfeasibleError(RuntimeError):
    """The QoS targets cannot be met under the power budget."""


class DegenerateChannelError(ValueError):
    def __init__(self, users):
        self.users = list(users)
        super().__init__(f"zero estimate energy for users {self.users}")


@dataclass(frozen=True)
class TransformedPower:
    p_hat: np.ndarray
    traces: np.ndarray

    @classmethod
    def from_p(cls, p, traces) -> "TransformedPower":
        traces = np.asarray(traces, dtype=float)
        return cls(p_hat=np.asarray(p, dtype=float) * traces, traces=traces)

    def to_p(self) -> np.ndarray:
        if np.any(self.traces <= 0):
            raise DegenerateChannelError(np.flatnonzero(self.traces <= 0))
        return self.p_hat / self.traces


@dataclass(frozen=True)
class SinrCoefficients:
    psi: np.ndarray
    psi_bar: np.ndarray
    noise: np.ndarray

    @property
    def n_users(self) -> int:
        return self.psi.size


def build_sinr_coefficients(ctx: RateContext) -> SinrCoefficients:
    tr = ctx.traces
    bad = np.flatnonzero(~(tr > 0))
    if bad.size:
        raise DegenerateChannelError(bad)
    psi_bar = ctx.cross_traces / tr[None, :]
    psi_bar[np.diag_indices_from(psi_bar)] -= ctx.self_weight * ctx.self_traces / tr
    return SinrCoefficients(psi=tr.copy(), psi_bar=psi_bar, noise=ctx.noise_powers.copy())


def sinr_hat(p_hat, coeffs: SinrCoefficients) -> np.ndarray:
    p_hat = np.asarray(p_hat, dtype=float)
    return coeffs.psi * p_hat / (coeffs.psi_bar @ p_hat + coeffs.noise)


def rates_hat(p_hat, coeffs: SinrCoefficients, prelog: float) -> np.ndarray:
    return prelog * np.log1p(sinr_hat(p_hat, coeffs))


def surrogate_rate(p_hat, anchor, coeffs: SinrCoefficients, prelog: float) -> np.ndarray:
    """Concave minorant of every user's rate, tight at ``anchor``."""
    p_hat = np.asarray(p_hat, dtype=float)
    anchor = np.asarray(anchor, dtype=float)
    num = coeffs.psi * p_hat + coeffs.psi_bar @ p_hat + coeffs.noise
    den0 = coeffs.psi_bar @ anchor + coeffs.noise
    lin = (coeffs.psi_bar @ (p_hat - anchor)) / den0
    return prelog * (np.log(num) - np.log(den0) - lin)


class _Scaled:
    """SINR model in units ``x = p_hat / p_max`` with noise normalized to one."""

    def __init__(self, coeffs: SinrCoefficients, p_max: float, r_min, prelog: float):
        K = coeffs.n_users
        self.K = K
        self.p_max = float(p_max)
        self.prelog = float(prelog)
        scale = self.p_max / coeffs.noise
        self.b = coeffs.psi_bar * scale[:, None]
        self.a = self.b + np.diag(coeffs.psi * scale)
        r = np.broadcast_to(np.asarray(r_min, dtype=float), (K,)).copy()
        self.r = r
        self.qos = np.flatnonzero(r > 0)

    def rates(self, x):
        return self.prelog * (np.log1p(self.a @ x) - np.log1p(self.b @ x))

    def surrogate_parts(self, x, x0):
        """Values, gradients and Hessians of the surrogate rates."""
        num = 1.0 + self.a @ x
        den0 = 1.0 + self.b @ x0
        val = self.prelog * (np.log(num) - np.log(den0) - (self.b @ (x - x0)) / den0)
        grad = self.prelog * (self.a / num[:, None] - self.b / den0[:, None])
        hess = -self.prelog * np.einsum("ki,kj->kij", self.a, self.a) / num[:, None, None] ** 2
        return val, grad, hess


@dataclass
class SubproblemSolution:
    p_hat: np.ndarray
    surrogate_objective: float
    residual: float
    newton_steps: int


def _strict_start(model: _Scaled, x0: np.ndarray, anchor: np.ndarray) -> np.ndarray:
    """Phase I: find a point strictly inside the surrogate constraint set."""
    K = model.K
    floor = POSITIVITY_FLOOR

    def slacks(x):
        val, grad, hess = model.surrogate_parts(x, anchor)
        q = model.qos
        h = np.concatenate([val[q] - model.r[q], [1.0 - x.sum()], x - floor])
        J = np.vstack([grad[q], -np.ones((1, K)), np.eye(K)])
        H = np.concatenate([hess[q], np.zeros((1 + K, K, K))])
        return h, J, H

    h0, _, _ = slacks(x0)
    if np.all(h0 > 0):
        return x0
    x_start = np.clip(x0, 2 * floor, None)
    h_start, _, _ = slacks(x_start)
    s0 = float(h_start.min()) - 1.0

    def oracle(z):
        x, s = z[:-1], z[-1]
        h, J, H = slacks(x)
        m = h.size
        hz = h - s
        Jz = np.hstack([J, -np.ones((m, 1))])
        Hz = np.zeros((m, K + 1, K + 1))
        Hz[:, :K, :K] = H
        g = np.zeros(K + 1)
        g[-1] = 1.0
        return s, g, np.zeros((K + 1, K + 1)), hz, Jz, Hz

    res = barrier_maximize(oracle, np.append(x_start, s0), mu0=1e-2, stop=lambda z: z[-1] > 1e-9)
    if res.z[-1] <= 0:
        raise InfeasibleError(
            f"surrogate QoS constraints infeasible (best margin {res.z[-1]:.3e} nats)")
    return res.z[:-1]


def solve_sca_subproblem(anchor, coeffs: SinrCoefficients, p_max: float, r_min,
                         prelog: float) -> SubproblemSolution:
    """Maximize the surrogate sum rate subject to surrogate QoS and the budget.

    ``r_min`` is in nats/s/Hz (scalar or per user) and includes the prelog.
    Raises :class:`InfeasibleError` if the surrogate constraint set is empty.
    """
    model = _Scaled(coeffs, p_max, r_min, prelog)
    K = model.K
    x_anchor = np.asarray(anchor, dtype=float) / model.p_max
    x_start = _strict_start(model, x_anchor, x_anchor)
    floor = POSITIVITY_FLOOR

    def oracle(x):
        val, grad, hess = model.surrogate_parts(x, x_anchor)
        q = model.qos
        h = np.concatenate([val[q] - model.r[q], [1.0 - x.sum()], x - floor])
        J = np.vstack([grad[q], -np.ones((1, K)), np.eye(K)])
        H = np.concatenate([hess[q], np.zeros((1 + K, K, K))])
        return val.sum(), grad.sum(axis=0), hess.sum(axis=0), h, J, H

    res = barrier_maximize(oracle, x_start)
    x = res.z
    # snap negligible powers of users without a QoS target to exactly zero
    tiny = (x < 1e-9) & (model.r <= 0)
    if np.any(tiny):
        snapped = np.where(tiny, 0.0, x)
        if model.rates(snapped).sum() >= model.rates(x).sum():
            x = snapped
    return SubproblemSolution(p_hat=x * model.p_max, surrogate_objective=res.objective,
                              residual=res.residual, newton_steps=res.newton_steps)


@dataclass
class ScaResult:
    p_hat: np.ndarray
    trajectory: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False


def sca_loop(init, coeffs: SinrCoefficients, p_max: float, r_min, prelog: float,
             tol: float = 1e-5, max_iter: int = 100) -> ScaResult:
    """Repeat the convex subproblem around the latest iterate.

    The true sum rate never decreases: an iterate that would lower it (only
    possible through solver round-off) ends the loop and the previous point is
    kept.
    """
    p_hat = np.asarray(init, dtype=float).copy()
    obj = float(rates_hat(p_hat, coeffs, prelog).sum())
    traj = [obj]
    it = 0
    converged = False
    while it < max_iter:
        it += 1
        sol = solve_sca_subproblem(p_hat, coeffs, p_max, r_min, prelog)
        new_obj = float(rates_hat(sol.p_hat, coeffs, prelog).sum())
        if new_obj < obj:
            log.debug("SCA step lowered the sum rate by %.3e; keeping previous iterate", obj - new_obj)
            converged = True
            break
        change = (new_obj - obj) / max(abs(obj), 1e-300)
        p_hat, obj = sol.p_hat, new_obj
        traj.append(obj)
        if change < tol:
            converged = True
            break
    return ScaResult(p_hat=p_hat, trajectory=traj, iterations=it, converged=converged)


@dataclass
class FeasibilityResult:
    p_hat: np.ndarray
    feasible: bool
    margin: float          # min_k R_k / r_min_k at the returned point (inf without QoS)
    used_epa: bool


def _qos_ok(model: _Scaled, x) -> bool:
    q = model.qos
    return bool(np.all(model.rates(x)[q] >= model.r[q]))


def feasibility_phase(coeffs: SinrCoefficients, p_max: float, r_min, prelog: float,
                      max_iter: int = 100, tol: float = 1e-7) -> FeasibilityResult:
    """Find a QoS-feasible starting allocation.

    Tries the equal split first.  Otherwise runs SCA on the max-min problem
    ``max t  s.t.  R_k >= t r_min_k``, stopping once ``t`` exceeds one.
    """
    model = _Scaled(coeffs, p_max, r_min, prelog)
    K = model.K
    x = np.full(K, 1.0 / K)
    q = model.qos
    if q.size == 0:
        return FeasibilityResult(p_hat=x * model.p_max, feasible=True, margin=np.inf, used_epa=True)
    if _qos_ok(model, x) and np.all(model.rates(x)[q] > model.r[q]):
        margin = float(np.min(model.rates(x)[q] / model.r[q]))
        return FeasibilityResult(p_hat=x * model.p_max, feasible=True, margin=margin, used_epa=True)
    # keep the iterate strictly inside the box
    x = x * (1.0 - 1e-6)
    t_true = float(np.min(model.rates(x)[q] / model.r[q]))
    floor = POSITIVITY_FLOOR
    for _ in range(max_iter):
        anchor = x.copy()

        def oracle(z, anchor=anchor):
            xs, t = z[:-1], z[-1]
            val, grad, hess = model.surrogate_parts(xs, anchor)
            h = np.concatenate([val[q] - t * model.r[q], [1.0 - xs.sum()], xs - floor])
            J = np.zeros((h.size, K + 1))
            J[: q.size, :K] = grad[q]
            J[: q.size, K] = -model.r[q]
            J[q.size, :K] = -1.0
            J[q.size + 1:, :K] = np.eye(K)
            H = np.zeros((h.size, K + 1, K + 1))
            H[: q.size, :K, :K] = hess[q]
            g = np.zeros(K + 1)
            g[-1] = 1.0
            return t, g, np.zeros((K + 1, K + 1)), h, J, H

        t0 = min(t_true, float(np.min(model.surrogate_parts(x, anchor)[0][q] / model.r[q])))
        t0 = t0 - 0.5 * abs(t0) - 1e-3
        res = barrier_maximize(oracle, np.append(x, t0), mu0=1e-2)
        x_new = res.z[:-1]
        t_new = float(np.min(model.rates(x_new)[q] / model.r[q]))
        if t_new > 1.0 + 1e-9:
            return FeasibilityResult(p_hat=x_new * model.p_max, feasible=True, margin=t_new,
                                     used_epa=False)
        if t_new <= t_true * (1.0 + tol):
            x = x_new if t_new > t_true else x
            t_true = max(t_new, t_true)
            break
        x, t_true = x_new, t_new
    return FeasibilityResult(p_hat=x * model.p_max, feasible=False, margin=t_true, used_epa=False)


@dataclass
class PowerBlockResult:
    p: np.ndarray
    p_hat: np.ndarray
    feasible: bool
    sca: ScaResult | None
    feasibility: FeasibilityResult | None


def optimize_power(ctx: RateContext, p_max: float, r_min, init_p=None, tol: float = 1e-5,
                   max_iter: int = 100) -> PowerBlockResult:
    """Full power block at a fixed morph: feasible start (if needed) then SCA.

    ``init_p`` (raw per-user powers) is the warm start when it meets the budget
    and every QoS target; it is pulled slightly inside the budget so the
    barrier method has an interior.  Otherwise the feasibility phase supplies
    the start.
    """
    coeffs = build_sinr_coefficients(ctx)
    model = _Scaled(coeffs, p_max, r_min, ctx.prelog)
    feas = None
    sca = None
    if init_p is not None:
        x0 = np.asarray(init_p, dtype=float) * coeffs.psi / p_max
        q = model.qos
        if (x0.sum() <= 1.0 + 1e-9 and np.all(x0 >= 0)
                and np.all(model.rates(x0)[q] >= model.r[q] * (1.0 - 1e-12))):
            x0 = np.maximum(x0, 10.0 * POSITIVITY_FLOOR)
            x0 = x0 / max(x0.sum() / (1.0 - 1e-9), 1.0)
            try:
                sca = sca_loop(x0 * p_max, coeffs, p_max, r_min, ctx.prelog, tol=tol, max_iter=max_iter)
            except InfeasibleError:
                sca = None
    if sca is None:
        feas = feasibility_phase(coeffs, p_max, r_min, ctx.prelog)
        if not feas.feasible:
            return PowerBlockResult(p=feas.p_hat / coeffs.psi, p_hat=feas.p_hat, feasible=False,
                                    sca=None, feasibility=feas)
        sca = sca_loop(feas.p_hat, coeffs, p_max, r_min, ctx.prelog, tol=tol, max_iter=max_iter)
    return PowerBlockResult(p=sca.p_hat / coeffs.psi, p_hat=sca.p_hat, feasible=True, sca=sca,
                            feasibility=feas)
