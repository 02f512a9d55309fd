"""Morphable planar element layout.

Elements are numbered ``n = 1..N`` in row-major order (``N_x`` per row).  Storage
is 0-indexed, so element ``n`` lives at array index ``n - 1``; its reference
coordinates are ``x = ((n-1) mod N_x) d_h`` and ``z = floor((n-1)/N_x) d_v``.
The morph vector ``y`` displaces each element along the array normal, with the
lower bound fixed at 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np


@dataclass(frozen=True)
class SurfaceGeometry:
    """Uniform planar array in the x-z plane with per-element y displacement.

    Parameters
    ----------
    n_x, n_z : int
        Number of elements along the horizontal and vertical axes.
    d_h, d_v : float
        Horizontal and vertical element spacing in meters.
    wavelength : float
        Carrier wavelength in meters.
    y_max : float
        Morphing range in meters (``y_min`` is 0).
    y : array_like, optional
        Morph displacements, length ``N``.  Defaults to the flat array.
    """

    n_x: int
    n_z: int
    d_h: float
    d_v: float
    wavelength: float
    y_max: float
    y: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if int(self.n_x) < 1 or int(self.n_z) < 1:
            raise ValueError(f"element counts must be >= 1, got n_x={self.n_x}, n_z={self.n_z}")
        if not (self.d_h > 0 and self.d_v > 0):
            raise ValueError("element spacings must be positive")
        if not self.wavelength > 0:
            raise ValueError("wavelength must be positive")
        if self.y_max < 0:
            raise ValueError("y_max must be non-negative")
        y = np.zeros(self.n_elements) if self.y is None else np.asarray(self.y, dtype=float).copy()
        if y.shape != (self.n_elements,):
            raise ValueError(f"morph vector has shape {y.shape}, expected ({self.n_elements},)")
        y.setflags(write=False)
        object.__setattr__(self, "y", y)

    @property
    def n_elements(self) -> int:
        return int(self.n_x) * int(self.n_z)

    @property
    def wavenumber(self) -> float:
        return 2.0 * np.pi / self.wavelength

    def with_morph(self, y, project: bool = True) -> "SurfaceGeometry":
        """Return a copy with a new morph vector (clamped to the box by default)."""
        y = np.asarray(y, dtype=float)
        if project:
            y = project_morph(y, self.y_max)
        return replace(self, y=y)

    def positions(self) -> np.ndarray:
        return assemble_positions(self)

    def is_feasible(self) -> bool:
        return bool(np.all(self.y >= 0.0) and np.all(self.y <= self.y_max))


def build_reference_positions(n_x: int, n_z: int, d_h: float, d_v: float) -> np.ndarray:
    """In-plane ``(x, z)`` coordinates of every element, shape ``(N, 2)``."""
    if n_x < 1 or n_z < 1:
        raise ValueError("element counts must be >= 1")
    if d_h <= 0 or d_v <= 0:
        raise ValueError("element spacings must be positive")
    idx = np.arange(n_x * n_z)
    return np.column_stack([(idx % n_x) * d_h, (idx // n_x) * d_v]).astype(float)


def assemble_positions(geometry: SurfaceGeometry) -> np.ndarray:
    """3-D element positions ``v_n = (x_n, y_n, z_n)``, shape ``(N, 3)``."""
    xz = build_reference_positions(geometry.n_x, geometry.n_z, geometry.d_h, geometry.d_v)
    y = np.asarray(geometry.y, dtype=float)
    if y.shape != (xz.shape[0],):
        raise ValueError("morph vector length does not match the element count")
    return np.column_stack([xz[:, 0], y, xz[:, 1]])


def project_morph(y, y_max: float) -> np.ndarray:
    """Clamp every displacement to ``[0, y_max]``."""
    return np.clip(np.asarray(y, dtype=float), 0.0, max(float(y_max), 0.0))


def pairwise_distances(positions) -> np.ndarray:
    pos = np.atleast_2d(np.asarray(positions, dtype=np.float64))
    diff = pos[:, None, :] - pos[None, :, :]
    d = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    np.fill_diagonal(d, 0.0)
    return d
