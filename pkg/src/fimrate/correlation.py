"""Morph-dependent spatial correlation and its derivatives.

Under isotropic scattering the normalized correlation between elements n and m
is ``sinc(k d_nm)`` with ``k = 2 pi / wavelength`` and ``sinc(x) = sin(x)/x``.
A user's channel covariance is that matrix scaled by a per-element power gain.

Derivatives with respect to a displacement ``y_n`` touch both row n and column
n of the correlation matrix.  :func:`sinc_derivative_matrix` stores the row
entries ``W[n, m] = d/dy_n sinc(k d_nm)``; a trace functional ``tr(M dSigma)``
along ``e_n`` is then ``sum_m (M + M^T)[n, m] W[n, m]``
(:func:`trace_gradient`).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import SurfaceGeometry, assemble_positions, pairwise_distances

_COINCIDENT = 1e-12  # meters
_SERIES_CUTOFF = 1e-4  # radians


@dataclass(frozen=True)
class UserLinkStats:
    """Large-scale statistics of one user link.

    ``element_gain`` is the per-element channel variance (area times average
    intensity attenuation); only the product ever enters the model.
    """

    element_gain: float
    noise_power: float
    label: int = 0

    def __post_init__(self):
        if not self.element_gain > 0:
            raise ValueError(f"user {self.label}: element_gain must be positive")
        if not self.noise_power > 0:
            raise ValueError(f"user {self.label}: noise_power must be positive")


def sinc(x):
    """Unnormalized sinc, ``sin(x)/x`` with ``sinc(0) = 1``."""
    x = np.asarray(x, dtype=float)
    out = np.sinc(x / np.pi)
    return out if out.ndim else float(out)


def _sinc_prime(x: np.ndarray) -> np.ndarray:
    """d/dx sinc(x), using the Taylor series near the origin."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = np.abs(x) < _SERIES_CUTOFF
    xs = x[small]
    out[small] = -xs / 3.0 + xs**3 / 30.0
    xl = x[~small]
    out[~small] = np.cos(xl) / xl - np.sin(xl) / xl**2
    return out


def build_sigma_fim(geometry: SurfaceGeometry) -> np.ndarray:
    """Normalized spatial correlation matrix (unit diagonal)."""
    d = pairwise_distances(assemble_positions(geometry))
    sigma = sinc(geometry.wavenumber * d)
    sigma = np.atleast_2d(sigma)
    np.fill_diagonal(sigma, 1.0)
    return 0.5 * (sigma + sigma.T)


def build_user_covariance(sigma_fim: np.ndarray, stats: UserLinkStats | float) -> np.ndarray:
    gain = stats.element_gain if isinstance(stats, UserLinkStats) else float(stats)
    if not gain > 0:
        raise ValueError("element gain must be positive")
    return gain * np.asarray(sigma_fim, dtype=float)


def sinc_derivative_matrix(geometry: SurfaceGeometry) -> np.ndarray:
    """All row derivatives at once: ``W[n, m] = d/dy_n sinc(k d_nm)``.

    The chain rule gives ``sinc'(k d) * k * (y_n - y_m) / d``.  Pairs closer
    than 1e-12 m contribute 0 (limit of the expression).
    """
    pos = assemble_positions(geometry)
    d = pairwise_distances(pos)
    k = geometry.wavenumber
    dy = pos[:, 1][:, None] - pos[:, 1][None, :]
    w = np.zeros_like(d)
    mask = d > _COINCIDENT
    w[mask] = _sinc_prime(k * d[mask]) * k * dy[mask] / d[mask]
    np.fill_diagonal(w, 0.0)
    return w


def sigma_derivative_row(geometry: SurfaceGeometry, n: int) -> np.ndarray:
    """Matrix ``O_n``: zero except row ``n`` (1-indexed), which holds d/dy_n of row n.

    The full derivative of the symmetric correlation along ``e_n`` is
    ``O_n + O_n^T``.
    """
    N = geometry.n_elements
    if not 1 <= n <= N:
        raise IndexError(f"element index {n} outside 1..{N}")
    o = np.zeros((N, N))
    o[n - 1] = sinc_derivative_matrix(geometry)[n - 1]
    return o


def trace_gradient(m: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Gradient of ``y -> tr(M Sigma_FIM(y))`` for a fixed matrix ``M``.

    Returns the length-N vector ``tr(M (O_n + O_n^T))`` for every n.
    """
    m = np.asarray(m)
    return np.sum((m + m.T) * w, axis=1)
