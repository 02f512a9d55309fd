"""Block coordinate ascent over (power, morph)."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .geometry import project_morph
from .morph import AlState, MorphProblem, morph_block
from .power import InfeasibleError, optimize_power
from .rate import RateContext, nats_to_bits, rates, sum_rate, total_transmit_power

log = logging.getLogger(__name__)


@dataclass
class SolverConfig:
    """Iteration limits and tolerances (none of these are physical parameters)."""

    sca_tol: float = 1e-5
    sca_max_iter: int = 100
    inner_max_iter: int = 500
    inner_tol_wavelengths: float = 1e-6
    al_max_rounds: int = 30
    al_residual_tol: float = 1e-4
    rho0: float = 1.0
    varsigma: float = 0.7
    rho_min: float = 1e-8
    delta_0: float | None = None
    bca_tol: float = 1e-4
    bca_max_rounds: int = 20
    power_mode: str = "sca"          # "sca" or "epa"
    epa_mode: str = "transformed"    # "transformed" or "raw"
    morph_enabled: bool = True
    qos_tol_bps: float = 1e-6

    def __post_init__(self):
        if self.power_mode not in ("sca", "epa"):
            raise ValueError(f"power_mode must be 'sca' or 'epa', got {self.power_mode!r}")
        if self.epa_mode not in ("transformed", "raw"):
            raise ValueError(f"epa_mode must be 'transformed' or 'raw', got {self.epa_mode!r}")
        if not 0 < self.varsigma < 1:
            raise ValueError("varsigma must lie in (0, 1)")
        if not self.rho0 > 0:
            raise ValueError("rho0 must be positive")


@dataclass
class SolveResult:
    p_opt: np.ndarray
    y_opt: np.ndarray
    sum_rate: float                   # bps/Hz
    objective_trajectory: list        # (block label, sum rate bps/Hz)
    feasible: bool
    iterations: dict
    wall_time: float
    user_rates: np.ndarray = field(default_factory=lambda: np.zeros(0))  # bps/Hz
    transmit_power: float = 0.0
    diagnostics: dict = field(default_factory=dict)


def epa_powers(ctx: RateContext, p_max: float, mode: str = "transformed") -> np.ndarray:
    """Equal split of the budget, either in radiated power (default) or raw ``p_k``."""
    tr = ctx.traces
    if mode == "transformed":
        return (p_max / tr.size) / tr
    if mode == "raw":
        return np.full(tr.size, p_max / tr.sum())
    raise ValueError(f"unknown EPA mode {mode!r}")


def is_feasible(ctx: RateContext, p, p_max: float, r_min_nats, qos_tol_bps: float = 1e-6) -> bool:
    if total_transmit_power(p, ctx) > p_max * (1.0 + 1e-9):
        return False
    r = nats_to_bits(rates(p, ctx))
    return bool(np.all(r >= nats_to_bits(np.asarray(r_min_nats)) - qos_tol_bps))


def _power_block(problem: MorphProblem, ctx: RateContext, p, cfg: SolverConfig):
    if cfg.power_mode == "epa":
        return epa_powers(ctx, problem.p_max, cfg.epa_mode), True, 0
    res = optimize_power(ctx, problem.p_max, problem.r_min, init_p=p, tol=cfg.sca_tol,
                         max_iter=cfg.sca_max_iter)
    iters = res.sca.iterations if res.sca is not None else 0
    return res.p, res.feasible, iters


def run_bca(problem: MorphProblem, init_p=None, init_y=None, config: SolverConfig | None = None) -> SolveResult:
    """Alternate the power block and the morph block.

    Stops when a full round changes the sum rate by less than ``bca_tol``
    (relative), after ``bca_max_rounds`` rounds, or when a morph block fails
    to improve the sum rate at a feasible point (that morph is rolled back).
    """
    cfg = config or SolverConfig()
    t0 = time.perf_counter()
    K = len(problem.users)
    y_max = problem.geometry.y_max
    y = project_morph(problem.geometry.y if init_y is None else init_y, y_max)
    morph_on = cfg.morph_enabled and y_max > 0
    ctx = problem.context(y)
    state = AlState.initial(K, rho=cfg.rho0, varsigma=cfg.varsigma)
    p = None if init_p is None else np.asarray(init_p, dtype=float)
    traj: list = []
    iters = {"bca_rounds": 0, "sca": 0, "al_rounds": 0, "morph_inner": 0,
             "morph_rejected": 0, "power_repairs": 0}
    diag: dict = {}

    p, feasible, n_sca = _power_block(problem, ctx, p, cfg)
    iters["sca"] += n_sca
    if cfg.power_mode == "epa":
        feasible = is_feasible(ctx, p, problem.p_max, problem.r_min, cfg.qos_tol_bps)
    if not feasible and cfg.power_mode == "sca":
        epa = epa_powers(ctx, problem.p_max, cfg.epa_mode)
        diag["epa_sum_rate"] = nats_to_bits(sum_rate(epa, ctx))
        diag["epa_user_rates"] = nats_to_bits(rates(epa, ctx)).tolist()
        return _finish(problem, ctx, p, y, False, traj, iters, diag, t0)
    sr = sum_rate(p, ctx)
    traj.append(("power", nats_to_bits(sr)))
    iters["bca_rounds"] = 1

    for rnd in range(1, cfg.bca_max_rounds + 1):
        iters["bca_rounds"] = rnd
        round_start = sr
        if rnd > 1:
            p_new, ok, n_sca = _power_block(problem, ctx, p, cfg)
            iters["sca"] += n_sca
            new_sr = sum_rate(p_new, ctx)
            # an SCA pass that loses anything to round-off keeps the previous powers
            if ok and (cfg.power_mode == "epa" or new_sr >= sr):
                p, sr = p_new, new_sr
            traj.append(("power", nats_to_bits(sr)))
        if not morph_on:
            break

        mres = morph_block(problem, y, p, state, max_rounds=cfg.al_max_rounds,
                           residual_tol=cfg.al_residual_tol, inner_max_iter=cfg.inner_max_iter,
                           rho_min=cfg.rho_min, delta_0=cfg.delta_0,
                           inner_tol_wavelengths=cfg.inner_tol_wavelengths)
        iters["al_rounds"] += mres.rounds
        iters["morph_inner"] += mres.inner_iterations
        y_new = mres.y
        ctx_new = problem.context(y_new)
        p_new = _morph_powers(problem, ctx_new, p, cfg)
        ok = p_new is not None and is_feasible(ctx_new, p_new, problem.p_max, problem.r_min,
                                               cfg.qos_tol_bps)
        if not ok and cfg.power_mode == "sca":
            try:
                rep = optimize_power(ctx_new, problem.p_max, problem.r_min, init_p=None,
                                     tol=cfg.sca_tol, max_iter=cfg.sca_max_iter)
            except InfeasibleError:
                rep = None
            if rep is not None and rep.feasible:
                iters["power_repairs"] += 1
                p_new = rep.p
                ok = is_feasible(ctx_new, p_new, problem.p_max, problem.r_min, cfg.qos_tol_bps)
        new_sr = sum_rate(p_new, ctx_new) if ok else -np.inf
        if not ok or new_sr <= sr:
            iters["morph_rejected"] += 1
            log.debug("round %d: morph block rejected (feasible=%s, %.6g -> %.6g)", rnd, ok, sr, new_sr)
            break
        state = mres.state
        y, ctx, p, sr = y_new, ctx_new, p_new, new_sr
        traj.append(("morph", nats_to_bits(sr)))
        if abs(sr - round_start) < cfg.bca_tol * max(abs(round_start), 1e-12):
            break
    diag["al_state_rho"] = state.rho
    return _finish(problem, ctx, p, y, True, traj, iters, diag, t0)


def _morph_powers(problem: MorphProblem, ctx: RateContext, p, cfg: SolverConfig):
    if cfg.power_mode == "epa":
        return epa_powers(ctx, problem.p_max, cfg.epa_mode)
    power = total_transmit_power(p, ctx)
    if power > problem.p_max:
        return p * (problem.p_max / power)
    return p


def _finish(problem, ctx, p, y, feasible, traj, iters, diag, t0) -> SolveResult:
    ur = nats_to_bits(rates(p, ctx))
    return SolveResult(
        p_opt=np.asarray(p, dtype=float), y_opt=np.asarray(y, dtype=float),
        sum_rate=float(np.sum(ur)), objective_trajectory=traj, feasible=feasible,
        iterations=iters, wall_time=time.perf_counter() - t0, user_rates=ur,
        transmit_power=total_transmit_power(p, ctx), diagnostics=diag,
    )
