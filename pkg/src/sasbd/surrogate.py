"""Pseudo-Huber sparsity surrogate and its proximal operator.

``rho(x) = sum_i sqrt(x_i**2 + delta**2)``. The proximal map
``prox_{lam*rho}(z)`` has no closed form; each entry solves the monotone
scalar equation ``x + lam * x / sqrt(x**2 + delta**2) = z``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from ._backend import USE_NUMBA, njit

__all__ = [
    "SurrogateParams",
    "ProxConvergenceError",
    "rho",
    "rho_grad",
    "rho_hess",
    "soft_threshold",
    "prox_rho",
    "prox_rho_derivative",
    "prox_residual",
]

_MAX_ITERS = 200


class ProxConvergenceError(RuntimeError):
    def __init__(self, index, z):
        super().__init__(f"prox root-finder did not converge at entry {index} (z={z!r})")
        self.index = index
        self.z = z


@dataclass(frozen=True)
class SurrogateParams:
    """Sparsity weight ``lam`` and smoothing ``delta`` of the surrogate."""

    lam: float
    delta: float

    def __post_init__(self):
        if not (self.lam > 0 and self.delta > 0):
            raise ValueError("lam and delta must both be positive")
        if self.delta > self.lam:
            warnings.warn(
                f"delta={self.delta:g} exceeds lam={self.lam:g}; the sqrt(lam*delta) "
                "prox proximity bound is loose",
                stacklevel=2,
            )

    @classmethod
    def with_default_delta(cls, lam: float, ratio: float = 1e-2) -> "SurrogateParams":
        return cls(lam, ratio * lam)


def rho(x, delta: float) -> float:
    x = np.asarray(x, dtype=np.float64)
    return float(np.sum(np.hypot(x, delta)))


def rho_grad(x, delta: float) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x / np.hypot(x, delta)


def rho_hess(x, delta: float) -> np.ndarray:
    """Diagonal second derivative ``delta**2 / (x**2 + delta**2)**1.5``."""
    x = np.asarray(x, dtype=np.float64)
    h = np.hypot(x, delta)
    return (delta / h) ** 2 / h


def soft_threshold(z, lam: float):
    z = np.asarray(z, dtype=np.float64)
    out = np.sign(z) * np.maximum(np.abs(z) - lam, 0.0)
    return out if out.ndim else float(out)


# Scalar solve for |z|: the map f(x) = x + lam*x/hypot(x, delta) - z is
# increasing and concave on x >= 0 with f(max(z - lam, 0)) <= 0 <= f(z), so
# Newton started at the left bracket end climbs monotonically to the root.
# Bisection takes over if an iterate leaves the bracket.


@njit(cache=True)
def _prox_abs_scalar(z, lam, delta, tol):
    lo = z - lam
    if lo < 0.0:
        lo = 0.0
    hi = z
    x = lo
    scale = z if z > 1.0 else 1.0
    for _ in range(_MAX_ITERS):
        h = math.sqrt(x * x + delta * delta)
        f = x + lam * x / h - z
        if abs(f) <= tol * scale:
            return x, True
        if f < 0.0:
            lo = x
        else:
            hi = x
        fp = 1.0 + lam * (delta / h) * (delta / h) / h
        xn = x - f / fp
        if not (lo < xn < hi):
            xn = 0.5 * (lo + hi)
        if xn == x:
            return x, True
        x = xn
    h = math.sqrt(x * x + delta * delta)
    return x, abs(x + lam * x / h - z) <= tol * scale


@njit(cache=True)
def _prox_kernel(z, lam, delta, tol, out):
    for i in range(z.size):
        zi = z[i]
        xa, ok = _prox_abs_scalar(abs(zi), lam, delta, tol)
        if not ok:
            return i
        out[i] = xa if zi >= 0.0 else -xa
    return -1


def _prox_numpy(z, lam, delta, tol, out):
    za = np.abs(z)
    lo = np.maximum(za - lam, 0.0)
    hi = za.copy()
    x = lo.copy()
    scale = np.maximum(za, 1.0)
    active = np.ones(z.size, dtype=bool)
    d2 = delta * delta
    for _ in range(_MAX_ITERS):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        xi, zi = x[idx], za[idx]
        h = np.sqrt(xi * xi + d2)
        f = xi + lam * xi / h - zi
        done = np.abs(f) <= tol * scale[idx]
        neg = f < 0.0
        lo[idx] = np.where(neg, xi, lo[idx])
        hi[idx] = np.where(neg, hi[idx], xi)
        fp = 1.0 + lam * (delta / h) ** 2 / h
        xn = xi - f / fp
        bad = ~((lo[idx] < xn) & (xn < hi[idx]))
        xn = np.where(bad, 0.5 * (lo[idx] + hi[idx]), xn)
        stuck = xn == xi
        x[idx] = np.where(done, xi, xn)
        active[idx[done | stuck]] = False
    if np.any(active):
        h = np.sqrt(x * x + d2)
        res = np.abs(x + lam * x / h - za)
        bad = np.flatnonzero(active & ~(res <= tol * scale))  # NaN counts as failure
        if bad.size:
            return int(bad[0])
    np.copysign(x, z, out=out)
    # copysign maps -0.0 inputs to -0.0; keep exact zeros positive like the loop path
    out[out == 0.0] = 0.0
    return -1


def prox_rho(z, params: SurrogateParams, tol: float = 1e-13) -> np.ndarray:
    """Entrywise ``prox_{lam*rho}(z)``.

    Residual of the stationarity equation is below ``tol * max(1, |z_i|)``
    for every entry. Odd in ``z`` by construction.
    """
    z = np.asarray(z, dtype=np.float64)
    scalar = z.ndim == 0
    zf = np.ascontiguousarray(z.reshape(-1))
    out = np.empty_like(zf)
    if USE_NUMBA:
        bad = _prox_kernel(zf, float(params.lam), float(params.delta), float(tol), out)
    else:
        bad = _prox_numpy(zf, float(params.lam), float(params.delta), float(tol), out)
    if bad >= 0:
        raise ProxConvergenceError(bad, float(zf[bad]))
    out = out.reshape(z.shape)
    return float(out) if scalar else out


def prox_residual(x, z, params: SurrogateParams) -> np.ndarray:
    """Stationarity residual ``x + lam * rho'(x) - z``."""
    x = np.asarray(x, dtype=np.float64)
    return x + params.lam * rho_grad(x, params.delta) - np.asarray(z, dtype=np.float64)


def prox_rho_derivative(z, params: SurrogateParams, xz=None) -> np.ndarray:
    """Diagonal Jacobian of the prox, ``1 / (lam * rho''(x_z) + 1)``, in (0, 1)."""
    if xz is None:
        xz = prox_rho(z, params)
    return 1.0 / (params.lam * rho_hess(xz, params.delta) + 1.0)
