"""Seeded synthesis of planted short-and-sparse instances."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .signal import Kernel, Observation, SparseMap, cconv, ccorr, embed

__all__ = [
    "PRNG_VERSION",
    "FAMILIES",
    "InstanceSpec",
    "PlantedInstance",
    "derive_seed",
    "sample_bg",
    "sample_kernel",
    "shift_coherence",
    "truncated_shift_coherence",
    "make_instance",
    "save_instance",
    "load_instance",
]

PRNG_VERSION = "numpy-PCG64/SeedSequence/v1"
FAMILIES = ("spiky", "generic", "tapered_lowpass")
FORMAT_NAME = "sasbd-instance"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class InstanceSpec:
    """Parameters of a planted instance.

    ``L`` is the number of low DFT frequencies of the tapered lowpass family
    (default ``ceil(p0/3)``); ``noise`` is the off-peak noise level of the
    spiky family (default ``0.05/sqrt(p0)``).
    """

    p0: int
    n: int
    theta: float
    family: str = "generic"
    seed: int = 0
    L: int | None = None
    noise: float | None = None

    def __post_init__(self):
        if not (2 <= self.p0 <= self.n):
            raise ValueError(f"p0 must satisfy 2 <= p0 <= n (got p0={self.p0}, n={self.n})")
        if not (0.0 < self.theta < 1.0):
            raise ValueError(f"theta must lie in (0, 1) (got {self.theta})")
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES} (got {self.family!r})")
        if self.family == "tapered_lowpass" and not (1 <= self.lowpass_L <= self.p0):
            raise ValueError(f"L must satisfy 1 <= L <= p0 (got {self.L})")
        if self.noise is not None and self.noise < 0:
            raise ValueError("noise must be non-negative")

    @property
    def p(self) -> int:
        return 3 * self.p0 - 2

    @property
    def lowpass_L(self) -> int:
        return self.L if self.L is not None else math.ceil(self.p0 / 3)

    @property
    def spiky_noise(self) -> float:
        return self.noise if self.noise is not None else 0.05 / math.sqrt(self.p0)


@dataclass(frozen=True)
class PlantedInstance:
    a0: Kernel
    x0: SparseMap
    y: Observation
    spec: InstanceSpec


def derive_seed(base_seed: int, *keys) -> int:
    """Order-independent 64-bit seed for a tuple of integer/float keys."""
    words = [int(base_seed) & 0xFFFFFFFFFFFFFFFF]
    for k in keys:
        if isinstance(k, float):
            k = int(round(k * 1e12))
        words.append(int(k) & 0xFFFFFFFFFFFFFFFF)
    state = np.random.SeedSequence(words).generate_state(2, dtype=np.uint32)
    return int(state[0]) | (int(state[1]) << 32)


def _rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))


def sample_bg(n: int, theta: float, seed) -> SparseMap:
    """Bernoulli(theta) x N(0, 1) entries, independent."""
    if not (0.0 <= theta <= 1.0):
        raise ValueError("theta must lie in [0, 1]")
    rng = _rng(seed)
    omega = rng.random(n) < theta
    g = rng.standard_normal(n)
    if theta >= 1.0:
        omega[:] = True
    x = np.where(omega, g, 0.0)
    return SparseMap(x, np.flatnonzero(omega))


def sample_kernel(spec: InstanceSpec, seed=None) -> Kernel:
    rng = _rng(spec.seed if seed is None else seed)
    p0 = spec.p0
    if spec.family == "spiky":
        a = rng.uniform(-1.0, 1.0, p0) * spec.spiky_noise
        a[0] = 1.0
    elif spec.family == "generic":
        a = rng.standard_normal(p0)
    else:
        L = spec.lowpass_L
        coef = np.zeros(p0, dtype=np.complex128)
        coef[0] = rng.standard_normal()
        for k in range(1, L):
            c = rng.standard_normal() + 1j * rng.standard_normal()
            coef[k] = c
            coef[-k] = np.conj(c)  # conjugate-symmetric completion
        if p0 % 2 == 0 and L > p0 // 2:
            coef[p0 // 2] = coef[p0 // 2].real
        a = np.fft.ifft(coef).real * np.hamming(p0)
        if not np.any(a):
            a[0] = 1.0
    return Kernel.unit(a)


def shift_coherence(a, n: int) -> float:
    """Largest |<a, s_l[a]>| over the nonzero cyclic shifts in R^n."""
    a = np.asarray(getattr(a, "values", a), dtype=np.float64)
    if n <= 1:
        return 0.0
    r = ccorr(embed(a, n), a)
    return float(np.max(np.abs(r[1:])))


def truncated_shift_coherence(a) -> float:
    """Largest |<t_i, t_j>|, i != j, over length-p0 window truncations of shifts."""
    a = np.asarray(getattr(a, "values", a), dtype=np.float64)
    p0 = a.size
    best = 0.0
    js = np.arange(-p0 + 1, p0)
    for d in range(1, 2 * p0 - 1):
        # <t_i, t_{i+d}> = sum of a[m]*a[m+d] over m in [max(0,-j), min(p0-d, p0-j))
        if d >= p0:
            continue
        q = np.concatenate([[0.0], np.cumsum(a[: p0 - d] * a[d:])])
        j = js[(js - d >= -p0 + 1)]
        lo = np.maximum(0, -j)
        hi = np.minimum(p0 - d, p0 - j)
        ok = hi > lo
        if np.any(ok):
            vals = q[hi[ok]] - q[lo[ok]]
            best = max(best, float(np.max(np.abs(vals))))
    return best


def make_instance(spec: InstanceSpec) -> PlantedInstance:
    ss = np.random.SeedSequence(int(spec.seed))
    k_seq, x_seq = ss.spawn(2)
    a0 = sample_kernel(spec, np.random.Generator(np.random.PCG64(k_seq)))
    x0 = sample_bg(spec.n, spec.theta, np.random.Generator(np.random.PCG64(x_seq)))
    y = Observation(cconv(a0.values, x0.values))
    return PlantedInstance(a0, x0, y, spec)


def save_instance(inst: PlantedInstance, path) -> tuple[Path, Path]:
    """Write ``<path>.json`` metadata and ``<path>.bin`` little-endian float64 data."""
    path = Path(path)
    if path.suffix in (".json", ".bin"):
        path = path.with_suffix("")
    meta_path, bin_path = path.with_suffix(".json"), path.with_suffix(".bin")
    arrays = {"a0": inst.a0.values, "x0": inst.x0.values, "y": inst.y.values}
    layout, offset = {}, 0
    for name, arr in arrays.items():
        layout[name] = {"offset": offset, "length": int(arr.size)}
        offset += arr.size
    meta = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "prng": PRNG_VERSION,
        "dtype": "<f8",
        "data": bin_path.name,
        "spec": asdict(inst.spec),
        "arrays": layout,
        "support_size": int(inst.x0.support.size),
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    blob = np.concatenate(list(arrays.values())).astype("<f8")
    bin_path.write_bytes(blob.tobytes())
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return meta_path, bin_path


def load_instance(path) -> PlantedInstance:
    path = Path(path)
    if path.suffix != ".json":
        path = path.with_suffix(".json")
    meta = json.loads(path.read_text())
    if meta.get("format") != FORMAT_NAME:
        raise ValueError(f"{path}: not a {FORMAT_NAME} file")
    blob = np.frombuffer((path.parent / meta["data"]).read_bytes(), dtype="<f8")

    def take(name):
        lay = meta["arrays"][name]
        return blob[lay["offset"]: lay["offset"] + lay["length"]].astype(np.float64)

    spec = InstanceSpec(**meta["spec"])
    return PlantedInstance(Kernel(take("a0")), SparseMap(take("x0")), Observation(take("y")), spec)
