"""Morph optimization for fixed per-user powers.

The QoS and budget constraints enter an augmented Lagrangian with slacks

    g_k = r_k + eps_k - R_k(y),            k = 1..K
    g_0 = sum_k p_k tr(Sigma_hat_k(y)) / p_max + eps_0 - 1
    F   = sum_k [R_k - nu_k g_k] - nu_0 g_0 - (sum_k g_k^2 + g_0^2) / (2 rho)

which is maximized over the box ``0 <= y <= y_max`` by projected gradient
ascent with Barzilai-Borwein steps.  Slacks take their closed-form maximizer
after every step; multipliers and the penalty are updated between inner runs.

All gradients are trace functionals ``tr(M dSigma_FIM)`` of the normalized
correlation, contracted with :func:`fimrate.correlation.trace_gradient`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .correlation import (UserLinkStats, build_sigma_fim, sinc_derivative_matrix,
                          trace_gradient)
from .geometry import SurfaceGeometry, project_morph
from .rate import RateContext, build_rate_context, interference_powers, rates, signal_powers

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MorphProblem:
    """Data fixed during a morph block (powers, budgets, link statistics)."""

    geometry: SurfaceGeometry
    users: Sequence[UserLinkStats]
    regularizer: float
    prelog: float
    p_max: float
    r_min: np.ndarray  # nats, per user
    interference: str = "uatf"

    def context(self, y) -> RateContext:
        geo = self.geometry.with_morph(y, project=False)
        return build_rate_context(build_sigma_fim(geo), self.users, self.regularizer,
                                  self.prelog, self.interference)

    def derivative(self, y) -> np.ndarray:
        return sinc_derivative_matrix(self.geometry.with_morph(y, project=False))

    @property
    def wavelength(self) -> float:
        return self.geometry.wavelength


@dataclass(frozen=True)
class AlState:
    nu: np.ndarray       # [nu_0, nu_1..nu_K]
    rho: float
    eps: np.ndarray      # [eps_0, eps_1..eps_K]
    varsigma: float = 0.7

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError("penalty parameter must be positive")
        if not 0.0 < self.varsigma < 1.0:
            raise ValueError("penalty decay must lie in (0, 1)")
        if np.any(np.asarray(self.eps) < 0):
            raise ValueError("slacks must be non-negative")

    @classmethod
    def initial(cls, n_users: int, rho: float = 1.0, varsigma: float = 0.7) -> "AlState":
        return cls(nu=np.zeros(n_users + 1), rho=rho, eps=np.zeros(n_users + 1), varsigma=varsigma)


# ---------------------------------------------------------------------------
# residuals and objective


def constraint_residuals(ctx: RateContext, p, eps, p_max: float, r_min) -> np.ndarray:
    """``[g_0, g_1..g_K]``; non-positive entries mean satisfied with the slack as margin."""
    p = np.asarray(p, dtype=float)
    eps = np.asarray(eps, dtype=float)
    g0 = float(np.dot(p, ctx.traces)) / p_max + eps[0] - 1.0
    gk = np.asarray(r_min, dtype=float) + eps[1:] - rates(p, ctx)
    return np.concatenate([[g0], gk])


def augmented_objective(ctx: RateContext, p, eps, state: AlState, p_max: float, r_min) -> float:
    g = constraint_residuals(ctx, p, eps, p_max, r_min)
    return float(np.sum(rates(p, ctx)) - np.dot(state.nu, g) - np.dot(g, g) / (2.0 * state.rho))


def update_slacks(ctx: RateContext, p, state: AlState, p_max: float, r_min) -> np.ndarray:
    """Closed-form maximizer of the augmented Lagrangian over ``eps >= 0``."""
    p = np.asarray(p, dtype=float)
    eps0 = max(0.0, 1.0 - float(np.dot(p, ctx.traces)) / p_max - state.nu[0] * state.rho)
    epsk = np.maximum(0.0, rates(p, ctx) - np.asarray(r_min, dtype=float) - state.nu[1:] * state.rho)
    return np.concatenate([[eps0], epsk])


def update_multipliers_and_penalty(state: AlState, residuals, varsigma: float | None = None,
                                   rho_min: float = 0.0) -> AlState:
    varsigma = state.varsigma if varsigma is None else varsigma
    nu = state.nu + np.asarray(residuals, dtype=float) / state.rho
    return replace(state, nu=nu, rho=max(state.rho * varsigma, rho_min), varsigma=varsigma)


# ---------------------------------------------------------------------------
# gradients


@dataclass
class _Adjoints:
    """Matrices ``M`` with ``d(quantity) = tr(M dSigma_FIM)``."""

    trace: list   # per user, for tr(Sigma_hat_k)
    signal: list  # per user, for S_k
    interf: list  # per user, for I_k


def _adjoints(ctx: RateContext, p) -> _Adjoints:
    p = np.asarray(p, dtype=float)
    sig_f = ctx.sigma_fim
    gains = ctx.gains
    c = ctx.self_weight
    qs = [b.q @ b.sigma for b in ctx.bundles]           # Q_k Sigma_k
    b_mats = [P - P @ P.T + P.T for P in qs]            # B_k
    C = sum(pk * b.sigma_hat for pk, b in zip(p, ctx.bundles))
    # G_{k,j} = g_k (Q_j Sigma_j Sigma_F - Q_j Sigma_j Sigma_F Sigma_j Q_j + Sigma_F Sigma_j Q_j)
    g_sum = np.zeros_like(sig_f)
    for j, P in enumerate(qs):
        PS = P @ sig_f
        g_sum += p[j] * gains[j] * (PS - PS @ P.T + PS.T)
    trace, signal, interf = [], [], []
    for k, (P, B, bund) in enumerate(zip(qs, b_mats, ctx.bundles)):
        gk = gains[k]
        trace.append(gk * B)
        signal.append(2.0 * p[k] * bund.tr_sigma_hat * gk * B)
        m = gk * C + gk * g_sum
        if c:
            Sh = bund.sigma_hat
            PSh = P @ Sh
            D = PSh - PSh @ P.T + Sh @ P.T
            m = m - 2.0 * c * p[k] * gk * D
        interf.append(m)
    return _Adjoints(trace=trace, signal=signal, interf=interf)


def _rate_adjoints(ctx: RateContext, p, adj: _Adjoints) -> list:
    S = signal_powers(p, ctx)
    I = interference_powers(p, ctx)
    gamma = S / I
    out = []
    for k in range(ctx.n_users):
        scale = ctx.prelog / ((1.0 + gamma[k]) * I[k] ** 2)
        out.append(scale * (I[k] * adj.signal[k] - S[k] * adj.interf[k]))
    return out


def grad_trace_sigma_hat(problem: MorphProblem, y, k: int, n: int | None = None):
    """d tr(Sigma_hat_k) / dy (full vector, or entry ``n`` 1-indexed)."""
    ctx = problem.context(y)
    adj = _adjoints(ctx, np.zeros(ctx.n_users))
    g = trace_gradient(adj.trace[k], problem.derivative(y))
    return g if n is None else float(g[n - 1])


def grad_rate(problem: MorphProblem, y, k: int, p, n: int | None = None):
    """dR_k / dy in nats per meter (full vector, or entry ``n`` 1-indexed)."""
    ctx = problem.context(y)
    adj = _adjoints(ctx, p)
    m = _rate_adjoints(ctx, p, adj)[k]
    g = trace_gradient(m, problem.derivative(y))
    return g if n is None else float(g[n - 1])


def _augmented_gradient(ctx: RateContext, w: np.ndarray, p, eps, state: AlState,
                        p_max: float, r_min) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    g = constraint_residuals(ctx, p, eps, p_max, r_min)
    adj = _adjoints(ctx, p)
    rate_adj = _rate_adjoints(ctx, p, adj)
    weights = 1.0 + state.nu[1:] + g[1:] / state.rho
    w0 = (state.nu[0] + g[0] / state.rho) / p_max
    total = sum(wk * m for wk, m in zip(weights, rate_adj))
    total = total - w0 * sum(pk * m for pk, m in zip(p, adj.trace))
    return trace_gradient(total, w)


def grad_augmented(problem: MorphProblem, y, eps, state: AlState, p) -> np.ndarray:
    return _augmented_gradient(problem.context(y), problem.derivative(y), p, eps, state,
                               problem.p_max, problem.r_min)


# ---------------------------------------------------------------------------
# step size and inner loop


def bb_step(y_prev, y_curr, g_prev, g_curr, delta_0: float, wavelength: float) -> float:
    """Barzilai-Borwein step ``|s.t| / (t.t)`` with ``s = dy``, ``t = d grad``.

    Clamped to ``[1e-8, 1e2] * wavelength``; ``delta_0`` on the first call or
    when the gradient change vanishes.
    """
    if y_prev is None or g_prev is None:
        return float(delta_0)
    s = np.asarray(y_curr) - np.asarray(y_prev)
    t = np.asarray(g_curr) - np.asarray(g_prev)
    den = float(t @ t)
    if den < 1e-30:
        return float(delta_0)
    delta = abs(float(s @ t)) / den
    return float(np.clip(delta, 1e-8 * wavelength, 1e2 * wavelength))


@dataclass
class InnerResult:
    y: np.ndarray
    eps: np.ndarray
    objective: float
    initial_objective: float
    iterations: int
    converged: bool


@dataclass
class _Point:
    y: np.ndarray
    ctx: RateContext
    eps: np.ndarray
    F: float


def _evaluate(problem: MorphProblem, y, p, state: AlState) -> _Point:
    ctx = problem.context(y)
    eps = update_slacks(ctx, p, state, problem.p_max, problem.r_min)
    F = augmented_objective(ctx, p, eps, state, problem.p_max, problem.r_min)
    return _Point(y=np.asarray(y, dtype=float), ctx=ctx, eps=eps, F=F)


def inner_morph_loop(problem: MorphProblem, y_init, p, state: AlState, max_iter: int = 500,
                     tol_wavelengths: float = 1e-6, delta_0: float | None = None,
                     max_halvings: int = 20) -> InnerResult:
    """Projected BB gradient ascent on the augmented Lagrangian at fixed multipliers.

    A step that lowers the objective is halved up to ``max_halvings`` times;
    if it still fails the loop stops at the current point.
    """
    lam = problem.wavelength
    y_max = problem.geometry.y_max
    cur = _evaluate(problem, project_morph(y_init, y_max), p, state)
    F0 = cur.F
    y_prev = g_prev = None
    it = 0
    converged = False
    while it < max_iter:
        it += 1
        grad = _augmented_gradient(cur.ctx, problem.derivative(cur.y), p, cur.eps, state,
                                   problem.p_max, problem.r_min)
        gmax = float(np.max(np.abs(grad))) if grad.size else 0.0
        if gmax == 0.0 or y_max == 0.0:
            converged = True
            break
        d0 = delta_0 if delta_0 is not None else 0.1 * y_max / gmax
        delta = bb_step(y_prev, cur.y, g_prev, grad, d0, lam)
        accepted = None
        for _ in range(max_halvings + 1):
            y_new = project_morph(cur.y + delta * grad, y_max)
            if np.max(np.abs(y_new - cur.y)) < tol_wavelengths * lam:
                break
            cand = _evaluate(problem, y_new, p, state)
            if cand.F >= cur.F - 1e-12 * max(1.0, abs(cur.F)):
                accepted = cand
                break
            delta *= 0.5
        if accepted is None:
            converged = True
            break
        step = float(np.max(np.abs(accepted.y - cur.y)))
        y_prev, g_prev = cur.y, grad
        cur = accepted
        if step < tol_wavelengths * lam:
            converged = True
            break
    return InnerResult(y=cur.y, eps=cur.eps, objective=cur.F, initial_objective=F0,
                       iterations=it, converged=converged)


@dataclass
class MorphResult:
    y: np.ndarray
    state: AlState
    rounds: int
    inner_iterations: int
    max_residual: float
    converged: bool
    sum_rates: list = field(default_factory=list)


def morph_block(problem: MorphProblem, y_init, p, state: AlState | None = None,
                max_rounds: int = 30, residual_tol: float = 1e-4, rate_tol: float = 1e-6,
                inner_max_iter: int = 500, rho_min: float = 1e-8,
                delta_0: float | None = None, inner_tol_wavelengths: float = 1e-6) -> MorphResult:
    """Augmented-Lagrangian rounds: inner ascent, then multiplier and penalty update."""
    p = np.asarray(p, dtype=float)
    if state is None:
        state = AlState.initial(len(problem.users))
    y = project_morph(y_init, problem.geometry.y_max)
    total_inner = 0
    history = []
    prev = None
    converged = False
    max_res = np.inf
    rounds = 0
    for rounds in range(1, max_rounds + 1):
        inner = inner_morph_loop(problem, y, p, state, max_iter=inner_max_iter,
                                 tol_wavelengths=inner_tol_wavelengths, delta_0=delta_0)
        total_inner += inner.iterations
        y = inner.y
        ctx = problem.context(y)
        eps = update_slacks(ctx, p, state, problem.p_max, problem.r_min)
        g = constraint_residuals(ctx, p, eps, problem.p_max, problem.r_min)
        max_res = float(np.max(np.abs(g)))
        sr = float(np.sum(rates(p, ctx)))
        history.append(sr)
        state = update_multipliers_and_penalty(replace(state, eps=eps), g, rho_min=rho_min)
        if max_res < residual_tol and prev is not None and abs(sr - prev) <= rate_tol * max(abs(prev), 1.0):
            converged = True
            break
        prev = sr
    return MorphResult(y=y, state=state, rounds=rounds, inner_iterations=total_inner,
                       max_residual=max_res, converged=converged, sum_rates=history)
