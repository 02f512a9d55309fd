"""LMMSE channel-estimate covariance algebra and a pilot-level sampling check."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg


@dataclass(frozen=True)
class PilotConfig:
    """Orthogonal uplink training.

    Parameters
    ----------
    tau : int
        Pilot length in symbols (must be at least the number of users).
    p_train : float
        Per-symbol pilot power in watts.
    noise_power : float
        Receiver noise power at the array, watts.
    """

    tau: int
    p_train: float
    noise_power: float

    def __post_init__(self):
        if self.tau < 1:
            raise ValueError("pilot length must be >= 1")
        if not self.p_train > 0:
            raise ValueError("p_train must be positive")
        if not self.noise_power > 0:
            raise ValueError("noise_power must be positive")

    @property
    def regularizer(self) -> float:
        """Effective noise variance of the matched-filter statistic."""
        return self.noise_power / (self.tau * self.p_train)


@dataclass(frozen=True)
class CovarianceBundle:
    sigma: np.ndarray
    q: np.ndarray
    sigma_hat: np.ndarray
    err_cov: np.ndarray
    tr_sigma_hat: float


@dataclass(frozen=True)
class PilotMoments:
    hat_cov: np.ndarray     # E{h_hat h_hat^H}
    err_cov: np.ndarray     # E{e e^H}
    cross_cov: np.ndarray   # E{e h_hat^H}
    hat_mean: np.ndarray    # E{h_hat}
    n_samples: int


def _sym(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


def lmmse_bundle(sigma: np.ndarray, pilot: PilotConfig | float) -> CovarianceBundle:
    """Estimate and error covariances for ``r = h + z``, ``z ~ CN(0, rho I)``.

    ``pilot`` may be a :class:`PilotConfig` or the regularizer ``rho`` directly.
    """
    rho = pilot.regularizer if isinstance(pilot, PilotConfig) else float(pilot)
    if not rho > 0:
        raise ValueError("training regularizer must be positive")
    sigma = _sym(np.asarray(sigma, dtype=float))
    n = sigma.shape[0]
    factor = linalg.cho_factor(sigma + rho * np.eye(n), lower=True)
    q = _sym(linalg.cho_solve(factor, np.eye(n)))
    sigma_q_sigma = sigma @ linalg.cho_solve(factor, sigma)
    sigma_hat = _sym(sigma_q_sigma)
    err_cov = sigma - sigma_hat
    return CovarianceBundle(sigma=sigma, q=q, sigma_hat=sigma_hat, err_cov=err_cov,
                            tr_sigma_hat=float(np.trace(sigma_hat)))


def complex_gaussian(cov: np.ndarray, n_samples: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n_samples`` columns from CN(0, cov); returns shape ``(N, n_samples)``.

    Uses an eigenvalue square root; eigenvalues below ``1e-10 * lambda_max`` are
    clipped to zero.
    """
    cov = np.asarray(cov)
    cov = 0.5 * (cov + cov.conj().T)
    vals, vecs = np.linalg.eigh(cov)
    lam_max = max(vals.max(initial=0.0), 0.0)
    vals = np.where(vals < 1e-10 * lam_max, 0.0, vals)
    root = vecs * np.sqrt(vals)
    n = cov.shape[0]
    w = (rng.standard_normal((n, n_samples)) + 1j * rng.standard_normal((n, n_samples))) / np.sqrt(2.0)
    return root @ w


def simulate_pilot_estimation(sigma: np.ndarray, pilot: PilotConfig, n_samples: int,
                              seed: int, chunk: int = 50_000) -> PilotMoments:
    """Empirical moments of the LMMSE estimate using the matched-filter statistic."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    bundle = lmmse_bundle(sigma, pilot)
    n = bundle.sigma.shape[0]
    gain = bundle.sigma @ bundle.q
    noise_cov = pilot.regularizer * np.eye(n)
    acc_hh = np.zeros((n, n), dtype=complex)
    acc_ee = np.zeros((n, n), dtype=complex)
    acc_eh = np.zeros((n, n), dtype=complex)
    acc_mean = np.zeros(n, dtype=complex)
    done = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        h = complex_gaussian(bundle.sigma, m, rng)
        r = h + complex_gaussian(noise_cov, m, rng)
        h_hat = gain @ r
        e = h - h_hat
        acc_hh += h_hat @ h_hat.conj().T
        acc_ee += e @ e.conj().T
        acc_eh += e @ h_hat.conj().T
        acc_mean += h_hat.sum(axis=1)
        done += m
    return PilotMoments(hat_cov=acc_hh / n_samples, err_cov=acc_ee / n_samples,
                        cross_cov=acc_eh / n_samples, hat_mean=acc_mean / n_samples,
                        n_samples=n_samples)
