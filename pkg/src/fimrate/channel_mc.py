"""Explicit multipath channel sampler.

Draws channels as a finite sum of plane waves arriving from isotropically
distributed directions.  As the number of paths grows, the samples become
zero-mean complex Gaussian with covariance ``element_gain * sinc(kappa * dist)``,
which makes this module an independent check on the correlation model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import SurfaceGeometry, assemble_positions


@dataclass(frozen=True)
class MultipathSpec:
    """Path count and per-element power of the multipath model.

    Angles are isotropic: density proportional to ``cos(elev)`` on
    ``elev in [-pi/2, pi/2]``, ``azim in [-pi, pi]``.
    """

    n_paths: int
    element_gain: float = 1.0

    def __post_init__(self):
        if int(self.n_paths) < 1:
            raise ValueError(f"n_paths must be >= 1, got {self.n_paths}")
        if not self.element_gain >= 0:
            raise ValueError("element_gain must be non-negative")


def angle_density(elevation, azimuth=None):
    """Joint angular density ``cos(elev) / (4 pi)``, normalized over the support."""
    elevation = np.asarray(elevation, dtype=float)
    inside = np.abs(elevation) <= np.pi / 2
    if azimuth is not None:
        inside &= np.abs(np.asarray(azimuth, dtype=float)) <= np.pi
    return np.where(inside, np.cos(elevation) / (4.0 * np.pi), 0.0)


def sample_angles(n: int | tuple, rng: np.random.Generator):
    """Draw elevation by inverting its CDF ``(1 + sin e) / 2`` and azimuth uniformly."""
    u = rng.random(n)
    elevation = np.arcsin(2.0 * u - 1.0)
    azimuth = rng.uniform(-np.pi, np.pi, n)
    return elevation, azimuth


def wave_vectors(elevation, azimuth, wavelength: float) -> np.ndarray:
    """Wave vectors with shape ``angles.shape + (3,)``."""
    ce = np.cos(elevation)
    w = np.stack([ce * np.cos(azimuth), ce * np.sin(azimuth), np.sin(elevation)], axis=-1)
    return (2.0 * np.pi / wavelength) * w


def response_vectors(geometry: SurfaceGeometry, elevation, azimuth) -> np.ndarray:
    """Array responses ``exp(j w^T v_n)``, shape ``angles.shape + (N,)``."""
    w = wave_vectors(elevation, azimuth, geometry.wavelength)
    return np.exp(1j * (w @ assemble_positions(geometry).T))


def _complex_normal(shape, variance, rng):
    scale = np.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def sample_channels(geometry: SurfaceGeometry, spec: MultipathSpec, n_samples: int,
                    seed=None, chunk: int = 2000) -> np.ndarray:
    """Draw ``n_samples`` independent channels, shape ``(n_samples, N)``.

    Parameters
    ----------
    chunk : int
        Samples built per batch, bounding the ``chunk * L * N`` working set.
    """
    rng = np.random.default_rng(seed)
    L = int(spec.n_paths)
    out = np.empty((n_samples, geometry.n_elements), dtype=complex)
    pos = assemble_positions(geometry)
    for start in range(0, n_samples, chunk):
        m = min(chunk, n_samples - start)
        elev, azim = sample_angles((m, L), rng)
        w = wave_vectors(elev, azim, geometry.wavelength)
        a = np.exp(1j * (w @ pos.T))                       # (m, L, N)
        c = _complex_normal((m, L), spec.element_gain, rng)
        out[start:start + m] = np.einsum("ml,mln->mn", c, a) / np.sqrt(L)
    return out


def sample_channel(geometry: SurfaceGeometry, spec: MultipathSpec, seed=None) -> np.ndarray:
    """One channel realization as a complex N-vector."""
    return sample_channels(geometry, spec, 1, seed=seed)[0]


def empirical_covariance(samples: np.ndarray) -> np.ndarray:
    """``E[h h^H]`` estimated from rows of ``samples`` (zero mean assumed)."""
    samples = np.asarray(samples)
    return samples.T @ samples.conj() / samples.shape[0]
