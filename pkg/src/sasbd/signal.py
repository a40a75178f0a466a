"""Cyclic signal algebra on length-``n`` real vectors.

Convolutions and correlations are computed with real FFTs. The O(n*m)
direct-sum versions are kept alongside as reference implementations.

Conventions
-----------
``cconv(a, x)[i] = sum_j a[j] * x[(i - j) % n]``
``ccorr(y, a)[i] = sum_j a[j] * y[(i + j) % n] = <shift(embed(a, n), i), y>``

so that ``<cconv(a, x), y> == <x, ccorr(y, a)>``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

__all__ = [
    "DegenerateProjectionError",
    "Kernel",
    "SparseMap",
    "Observation",
    "embed",
    "cconv",
    "ccorr",
    "cconv_direct",
    "ccorr_direct",
    "shift",
    "zero_pad_window",
    "project_sphere",
]


class DegenerateProjectionError(ValueError):
    """Raised when a zero vector is projected onto the sphere."""


@dataclass(frozen=True)
class Kernel:
    """Short dense kernel, usually on the unit sphere."""

    values: np.ndarray
    normalized: bool = True

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float64)
        if v.ndim != 1 or v.size == 0:
            raise ValueError("kernel values must be a non-empty 1-d array")
        if self.normalized and abs(np.linalg.norm(v) - 1.0) > 1e-12:
            raise ValueError("kernel flagged normalized but ||values|| != 1")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def unit(cls, values) -> "Kernel":
        return cls(project_sphere(np.asarray(values, dtype=np.float64)))

    @property
    def length(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class SparseMap:
    """Length-``n`` vector with an explicit sorted support list."""

    values: np.ndarray
    support: np.ndarray = field(default=None)

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float64)
        supp = np.flatnonzero(v) if self.support is None else np.asarray(self.support, dtype=np.int64)
        supp = np.unique(supp)
        if supp.size and (supp[0] < 0 or supp[-1] >= v.size):
            raise ValueError("support index out of range")
        off = np.ones(v.size, dtype=bool)
        off[supp] = False
        if np.any(v[off] != 0.0):
            raise ValueError("nonzero entries outside the recorded support")
        v.setflags(write=False)
        supp.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "support", supp)

    @classmethod
    def from_dense(cls, values) -> "SparseMap":
        return cls(np.asarray(values, dtype=np.float64))

    @property
    def n(self) -> int:
        return self.values.size


class Observation:
    """Observed signal ``y`` with a lazily cached real spectrum."""

    def __init__(self, values):
        v = np.array(values, dtype=np.float64)
        if v.ndim != 1 or v.size == 0:
            raise ValueError("observation must be a non-empty 1-d array")
        v.setflags(write=False)
        self.values = v

    @property
    def n(self) -> int:
        return self.values.size

    @cached_property
    def spectrum(self) -> np.ndarray:
        spec = np.fft.rfft(self.values)
        spec.setflags(write=False)
        return spec

    @cached_property
    def sqnorm(self) -> float:
        return float(self.values @ self.values)

    def __len__(self):
        return self.n


def _check_len(m: int, n: int) -> None:
    if n < 1:
        raise ValueError("signal length must be positive")
    if m > n:
        raise ValueError(f"dimension mismatch: short vector length {m} exceeds n={n}")


def embed(a, n: int, offset: int = 0) -> np.ndarray:
    """Zero-pad ``a`` into R^n starting at index ``offset`` (cyclically)."""
    a = np.asarray(a, dtype=np.float64)
    _check_len(a.size, n)
    out = np.zeros(n)
    out[(np.arange(a.size) + offset) % n] = a
    return out


def _spectrum(v, n):
    if isinstance(v, Observation):
        return v.spectrum
    return np.fft.rfft(np.asarray(v, dtype=np.float64), n)


def cconv(a, x) -> np.ndarray:
    """Circular convolution of a zero-padded short ``a`` with length-n ``x``."""
    xv = x.values if isinstance(x, (Observation, SparseMap)) else np.asarray(x, dtype=np.float64)
    n = xv.size
    a = np.asarray(a, dtype=np.float64)
    _check_len(a.size, n)
    return np.fft.irfft(np.fft.rfft(a, n) * _spectrum(x if isinstance(x, Observation) else xv, n), n)


def ccorr(y, a) -> np.ndarray:
    """Cross-correlation ``r[i] = <shift(embed(a), i), y>``, i.e. ``C_a^T y``."""
    if isinstance(y, Observation):
        n = y.n
    else:
        y = np.asarray(y, dtype=np.float64)
        n = y.size
    a = np.asarray(a, dtype=np.float64)
    _check_len(a.size, n)
    return np.fft.irfft(np.conj(np.fft.rfft(a, n)) * _spectrum(y, n), n)


def cconv_direct(a, x) -> np.ndarray:
    """O(n*m) reference for :func:`cconv`."""
    a = np.asarray(a, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    n, m = x.size, a.size
    _check_len(m, n)
    out = np.zeros(n)
    for i in range(n):
        s = 0.0
        for j in range(m):
            s += a[j] * x[(i - j) % n]
        out[i] = s
    return out


def ccorr_direct(y, a) -> np.ndarray:
    """O(n*m) reference for :func:`ccorr`."""
    a = np.asarray(a, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, m = y.size, a.size
    _check_len(m, n)
    out = np.zeros(n)
    for i in range(n):
        s = 0.0
        for j in range(m):
            s += a[j] * y[(i + j) % n]
        out[i] = s
    return out


def shift(v, ell: int) -> np.ndarray:
    """Cyclic shift: ``shift(v, l)[j] = v[(j - l) % n]``."""
    return np.roll(np.asarray(v, dtype=np.float64), int(ell))


def zero_pad_window(w) -> np.ndarray:
    """``[0^(p0-1); w; 0^(p0-1)]``, a vector of length ``3*p0 - 2``."""
    w = np.asarray(w, dtype=np.float64)
    p0 = w.size
    if p0 < 2:
        raise ValueError("window length must be at least 2")
    z = np.zeros(p0 - 1)
    return np.concatenate([z, w, z])


def project_sphere(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    nrm = np.linalg.norm(v)
    if not np.isfinite(nrm) or nrm == 0.0:
        raise DegenerateProjectionError("degenerate projection: vector has zero (or non-finite) norm")
    return v / nrm
