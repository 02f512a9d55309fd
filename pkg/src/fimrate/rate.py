"""Statistical-CSI achievable rates under MRT precoding on the channel estimates.

Rates are in nats/s/Hz internally; :func:`nats_to_bits` converts at the edges.

Two interference models are supported:

``"uatf"`` (default)
    ``I_k = sum_j p_j tr(Sigma_k Sigma_hat_j) + sigma_k^2``.  This is the exact
    second moment of the use-and-then-forget decomposition with ``f_k = h_hat_k``:
    the beamforming-uncertainty variance of the own term is ``tr(Sigma_k Sigma_hat_k)``.
``"error_only"``
    Subtracts ``p_k tr(Sigma_hat_k^2)`` from the above, so the own-term
    fluctuation counts only the estimation-error part ``tr(E_k Sigma_hat_k)``.
    Kept for comparison; it overstates the SINR relative to Monte-Carlo.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .correlation import UserLinkStats, build_user_covariance
from .estimation import CovarianceBundle, complex_gaussian, lmmse_bundle

INTERFERENCE_MODELS = ("uatf", "error_only")
_LN2 = math.log(2.0)


def nats_to_bits(x):
    return np.asarray(x) / _LN2 if np.ndim(x) else float(x) / _LN2


def bits_to_nats(x):
    return np.asarray(x) * _LN2 if np.ndim(x) else float(x) * _LN2


@dataclass(frozen=True)
class RateContext:
    """Everything the closed-form rates need at one morph configuration.

    Immutable; rebuild it whenever the morph vector changes.
    """

    bundles: tuple[CovarianceBundle, ...]
    gains: np.ndarray
    noise_powers: np.ndarray
    prelog: float
    regularizer: float
    sigma_fim: np.ndarray
    cross_traces: np.ndarray   # [k, j] = tr(Sigma_k Sigma_hat_j)
    self_traces: np.ndarray    # [k] = tr(Sigma_hat_k^2)
    interference: str = "uatf"

    @property
    def n_users(self) -> int:
        return len(self.bundles)

    @property
    def traces(self) -> np.ndarray:
        return np.array([b.tr_sigma_hat for b in self.bundles])

    @property
    def self_weight(self) -> float:
        """Coefficient on ``p_k tr(Sigma_hat_k^2)`` subtracted from the interference."""
        return 1.0 if self.interference == "error_only" else 0.0


def build_rate_context(sigma_fim: np.ndarray, users: Sequence[UserLinkStats], regularizer: float,
                       prelog: float, interference: str = "uatf") -> RateContext:
    if interference not in INTERFERENCE_MODELS:
        raise ValueError(f"unknown interference model {interference!r}")
    if not 0.0 <= prelog <= 1.0:
        raise ValueError("prelog must lie in [0, 1]")
    bundles = tuple(lmmse_bundle(build_user_covariance(sigma_fim, u), regularizer) for u in users)
    K = len(bundles)
    cross = np.empty((K, K))
    for k, bk in enumerate(bundles):
        for j, bj in enumerate(bundles):
            # both factors symmetric: tr(A B) = sum(A * B)
            cross[k, j] = np.sum(bk.sigma * bj.sigma_hat)
    self_tr = np.array([np.sum(b.sigma_hat * b.sigma_hat) for b in bundles])
    return RateContext(
        bundles=bundles,
        gains=np.array([u.element_gain for u in users], dtype=float),
        noise_powers=np.array([u.noise_power for u in users], dtype=float),
        prelog=float(prelog),
        regularizer=float(regularizer),
        sigma_fim=np.asarray(sigma_fim, dtype=float),
        cross_traces=cross,
        self_traces=self_tr,
        interference=interference,
    )


def _check_power(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if np.any(p < 0):
        raise ValueError("powers must be non-negative")
    return p


def signal_power(p_k: float, bundle: CovarianceBundle) -> float:
    if p_k < 0:
        raise ValueError("power must be non-negative")
    return float(p_k) * bundle.tr_sigma_hat**2


def signal_powers(p, ctx: RateContext) -> np.ndarray:
    return _check_power(p) * ctx.traces**2


def interference_powers(p, ctx: RateContext) -> np.ndarray:
    p = _check_power(p)
    return ctx.cross_traces @ p - ctx.self_weight * p * ctx.self_traces + ctx.noise_powers


def interference_power(p, k: int, ctx: RateContext) -> float:
    return float(interference_powers(p, ctx)[k])


def sinrs(p, ctx: RateContext) -> np.ndarray:
    return signal_powers(p, ctx) / interference_powers(p, ctx)


def rates(p, ctx: RateContext) -> np.ndarray:
    """Per-user rates in nats/s/Hz."""
    return ctx.prelog * np.log1p(sinrs(p, ctx))


def user_rate(p, k: int, ctx: RateContext) -> float:
    return float(rates(p, ctx)[k])


def sum_rate(p, ctx: RateContext) -> float:
    return float(np.sum(rates(p, ctx)))


def total_transmit_power(p, ctx: RateContext) -> float:
    return float(np.dot(_check_power(p), ctx.traces))


@dataclass(frozen=True)
class MonteCarloRates:
    signal: np.ndarray
    uncertainty: np.ndarray
    interference_mu: np.ndarray
    interference: np.ndarray
    rates: np.ndarray
    transmit_power: float
    gain_variance: np.ndarray  # empirical var(h_k^H h_hat_k)


def mc_uatf_rate(ctx: RateContext, p, n_samples: int, seed: int, chunk: int = 20_000) -> MonteCarloRates:
    """Sample the use-and-then-forget terms directly from channel realizations.

    Draws ``h_k ~ CN(0, Sigma_k)`` and pilot noise, forms the LMMSE estimates,
    uses ``f_k = h_hat_k`` and accumulates ``E{h_k^H f_j}`` and
    ``E{|h_k^H f_j|^2}``.  Intended for small arrays.
    """
    p = _check_power(p)
    rng = np.random.default_rng(seed)
    K = ctx.n_users
    N = ctx.sigma_fim.shape[0]
    noise_cov = ctx.regularizer * np.eye(N)
    sum_g = np.zeros((K, K), dtype=complex)
    sum_g2 = np.zeros((K, K))
    sum_norm = np.zeros(K)
    done = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        h = np.stack([complex_gaussian(b.sigma, m, rng) for b in ctx.bundles])
        h_hat = np.stack([
            b.sigma @ b.q @ (h[k] + complex_gaussian(noise_cov, m, rng))
            for k, b in enumerate(ctx.bundles)
        ])
        g = np.einsum("kns,jns->kjs", h.conj(), h_hat)
        sum_g += g.sum(axis=2)
        sum_g2 += (np.abs(g) ** 2).sum(axis=2)
        sum_norm += (np.abs(h_hat) ** 2).sum(axis=(1, 2))
        done += m
    mean_g = sum_g / n_samples
    mean_g2 = sum_g2 / n_samples
    own_mean = np.diag(mean_g)
    gain_var = np.diag(mean_g2) - np.abs(own_mean) ** 2
    signal = p * np.abs(own_mean) ** 2
    uncertainty = p * gain_var
    off = mean_g2 * (1.0 - np.eye(K))
    mui = off @ p
    interference = uncertainty + mui + ctx.noise_powers
    r = ctx.prelog * np.log1p(signal / interference)
    return MonteCarloRates(signal=signal, uncertainty=uncertainty, interference_mu=mui,
                           interference=interference, rates=r,
                           transmit_power=float(np.dot(p, sum_norm / n_samples)),
                           gain_variance=gain_var)
