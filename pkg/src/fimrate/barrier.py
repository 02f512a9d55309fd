"""Small dense log-barrier interior-point method.

Solves ``maximize f(z)  s.t.  h_i(z) >= 0`` for a concave ``f`` and concave
``h_i`` by following the central path of ``f(z) + mu * sum_i log h_i(z)``.
Sized for a handful of variables; everything is dense numpy.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

# (f, grad f, hess f, h, jac h, hess h) with shapes (), (n,), (n,n), (m,), (m,n), (m,n,n)
Oracle = Callable[[np.ndarray], Tuple[float, np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]]


@dataclass
class BarrierResult:
    z: np.ndarray
    objective: float
    mu: float
    residual: float
    newton_steps: int
    converged: bool
    stopped_early: bool = False


def _merit(oracle: Oracle, z: np.ndarray, mu: float):
    with np.errstate(invalid="ignore", divide="ignore"):
        f, g, H, h, J, Hh = oracle(z)
    if np.any(h <= 0) or not np.isfinite(f):
        return -np.inf, None
    return f + mu * np.sum(np.log(h)), (f, g, H, h, J, Hh)


def _newton_system(parts, mu):
    f, g, H, h, J, Hh = parts
    inv = 1.0 / h
    grad = g + mu * (J.T @ inv)
    hess = H + mu * (np.einsum("i,ijk->jk", inv, Hh) - (J.T * inv**2) @ J)
    return grad, hess


def barrier_maximize(oracle: Oracle, z0: np.ndarray, mu0: float = 1.0, shrink: float = 0.2,
                     gap_tol: float = 1e-11, newton_tol: float = 1e-9, grad_tol: float = 1e-7,
                     max_newton: int = 200,
                     stop: Optional[Callable[[np.ndarray], bool]] = None) -> BarrierResult:
    """Central-path following from a strictly feasible ``z0``.

    The barrier weight starts at ``mu0`` and is multiplied by ``shrink`` after
    each centering; the method ends once ``m * mu < gap_tol``.  Centering stops
    when half the squared Newton decrement drops below ``newton_tol`` and the
    barrier gradient is below ``grad_tol`` in max-norm.
    ``stop`` is checked after every accepted Newton step.
    """
    z = np.asarray(z0, dtype=float).copy()
    mu = float(mu0)
    val, parts = _merit(oracle, z, mu)
    if parts is None:
        raise ValueError("barrier start point is not strictly feasible")
    m = parts[3].size
    steps = 0
    grad = np.zeros_like(z)
    converged = False
    while True:
        for _ in range(max_newton):
            grad, hess = _newton_system(parts, mu)
            try:
                d = np.linalg.solve(-hess, grad)
            except np.linalg.LinAlgError:
                d = np.linalg.lstsq(-hess, grad, rcond=None)[0]
            dec2 = float(grad @ d)
            if not np.isfinite(dec2) or dec2 < 0:
                # fall back to steepest ascent if the Hessian lost definiteness numerically
                d = grad
                dec2 = float(grad @ grad)
            if dec2 / 2.0 <= newton_tol and (np.max(np.abs(grad)) <= grad_tol or dec2 <= 1e-24):
                break
            t = 1.0
            while t > 1e-16:
                cand = z + t * d
                cval, cparts = _merit(oracle, cand, mu)
                if cparts is not None and cval >= val + 0.25 * t * dec2:
                    break
                t *= 0.5
            else:
                break
            if cparts is None or cval < val:
                break
            z, val, parts = cand, cval, cparts
            steps += 1
            if stop is not None and stop(z):
                return BarrierResult(z=z, objective=float(parts[0]), mu=mu,
                                     residual=float(np.max(np.abs(grad))), newton_steps=steps,
                                     converged=False, stopped_early=True)
        if m * mu < gap_tol:
            converged = True
            break
        mu *= shrink
        val, parts = _merit(oracle, z, mu)
    grad, _ = _newton_system(parts, mu)
    return BarrierResult(z=z, objective=float(parts[0]), mu=mu,
                         residual=float(np.max(np.abs(grad))), newton_steps=steps,
                         converged=converged)
