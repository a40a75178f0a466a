"""Shift-space coordinates of a kernel iterate and analysis oracles.

A length-``p`` iterate (``p = 3*p0 - 2``) is viewed on the window
``W = {-p0+1, ..., 2*p0-2}``, so that its first entry sits at index
``-(p0-1)``. The shift ``s_l[a0]`` lies entirely inside ``W`` for
``l in [-p0+1, p0-1]`` and has a nonzero truncation for ``|l| <= 2*p0-2``.
The objective is invariant to where the window is placed, so this choice
only fixes how shifts are labelled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from .signal import ccorr, embed
from .surrogate import soft_threshold

__all__ = [
    "REGIONS",
    "ShiftSpaceView",
    "OutsideShiftSpanError",
    "shift_indices",
    "truncated_shift_matrix",
    "beta_of",
    "max_corr",
    "is_success",
    "alignment_error",
    "aligned_shift",
    "gram_M",
    "chi",
    "d_alpha",
    "classify_beta",
    "classify_region",
    "nu1",
    "nu2",
    "shift_view",
    "diagnostic_report",
    "oracle_erf_b",
    "oracle_smoothed_soft",
    "oracle_f_b",
    "oracle_smoothed_indicator",
]

REGIONS = ("NegativeCurvature", "LargeGradient", "ConvexNearShift", "Unclassified")
SUCCESS_THRESHOLD = 0.95


class OutsideShiftSpanError(ValueError):
    pass


def _vals(a):
    return np.asarray(getattr(a, "values", a), dtype=np.float64)


def shift_indices(p0: int) -> np.ndarray:
    """Shifts with a nonzero window truncation, ``-2*p0+2 .. 2*p0-2``."""
    return np.arange(-2 * p0 + 2, 2 * p0 - 1)


def truncated_shift_matrix(a0, p: int | None = None) -> np.ndarray:
    """Columns ``iota^* s_l[a0]`` for ``l`` in :func:`shift_indices`."""
    a0 = _vals(a0)
    p0 = a0.size
    p = 3 * p0 - 2 if p is None else p
    shifts = shift_indices(p0)
    A = np.zeros((p, shifts.size))
    for c, ell in enumerate(shifts):
        # window position k (array index k + p0 - 1) holds a0[k - ell]
        for j in range(p0):
            idx = j + ell + p0 - 1
            if 0 <= idx < p:
                A[idx, c] = a0[j]
    return A


def beta_of(a, a0) -> np.ndarray:
    """``beta_l = <a, iota^* s_l[a0]>`` over :func:`shift_indices`.

    Computed with a single correlation; shifts outside the returned range
    give exactly zero.
    """
    a, a0 = _vals(a), _vals(a0)
    p, p0 = a.size, a0.size
    shifts = shift_indices(p0)
    n = p + p0  # long enough that no wrap-around overlap occurs
    # place the window start at -(p0-1)
    r = ccorr(embed(a, n, offset=-(p0 - 1)), a0)
    return r[shifts % n]


def max_corr(a, a0) -> float:
    return float(np.max(np.abs(beta_of(a, a0))))


def is_success(a, a0, threshold: float = SUCCESS_THRESHOLD) -> bool:
    return max_corr(a, a0) > threshold


def aligned_shift(a, a0) -> tuple[int, int, np.ndarray]:
    """Signed shift of ``a0`` (within the window) closest to ``a``.

    Returns ``(sign, shift, target)`` where ``target`` is the length-p
    truncated signed shift minimizing ``||a - sign * iota^* s_l[a0]||``.
    """
    a, a0 = _vals(a), _vals(a0)
    A = truncated_shift_matrix(a0, a.size)
    beta = A.T @ a
    energy = np.sum(A * A, axis=0)
    d_plus = 1.0 + energy - 2 * beta
    d_minus = 1.0 + energy + 2 * beta
    i_p, i_m = int(np.argmin(d_plus)), int(np.argmin(d_minus))
    shifts = shift_indices(a0.size)
    if d_plus[i_p] <= d_minus[i_m]:
        return 1, int(shifts[i_p]), A[:, i_p].copy()
    return -1, int(shifts[i_m]), -A[:, i_m].copy()


def alignment_error(a, a0) -> float:
    """``min over sign, shift of ||a - sign * iota^* s_l[a0]||``."""
    a = _vals(a)
    _, _, target = aligned_shift(a, a0)
    return float(np.linalg.norm(a - target))


def gram_M(a0, p: int | None = None) -> np.ndarray:
    """Gram matrix of the truncated shifts, indexed by :func:`shift_indices`."""
    A = truncated_shift_matrix(a0, p)
    return A.T @ A


def chi(beta, x0, lam: float) -> np.ndarray:
    """``chi[beta] = X S_lam[X beta]`` with ``(X b)_i = sum_j x0_j b_{j-i}``.

    ``beta`` is a length-n vector indexed by cyclic shift, as in
    :func:`beta_of`. ``X`` is symmetric, so both passes are the same
    correlation against ``x0``.
    """
    beta = np.asarray(beta, dtype=np.float64)
    x0 = _vals(x0)
    return ccorr(x0, soft_threshold(ccorr(x0, beta), lam))


def d_alpha(a, a0, tau, *, rank_tol: float = 1e-10, feas_tol: float = 1e-8):
    """Distance ``min ||alpha_{tau^c}||`` subject to ``A alpha = a``.

    ``tau`` is an iterable of shift labels (see :func:`shift_indices`).
    Returns ``(dist, alpha)``; ``alpha`` is indexed like :func:`shift_indices`.
    """
    a, a0 = _vals(a), _vals(a0)
    A = truncated_shift_matrix(a0, a.size)
    shifts = shift_indices(a0.size)
    tau = set(int(t) for t in tau)
    in_tau = np.array([s in tau for s in shifts])
    At, Ac = A[:, in_tau], A[:, ~in_tau]
    # Eliminate the free tau-coefficients: with Q projecting off range(At),
    # the constraint reduces to Q Ac alpha_c = Q a and the minimum-norm
    # alpha_c is its pseudo-inverse solution.
    if At.shape[1]:
        U, s, _ = np.linalg.svd(At, full_matrices=False)
        U = U[:, s > rank_tol * max(1.0, s[0])]
        Q = np.eye(a.size) - U @ U.T
    else:
        Q = np.eye(a.size)
    alpha_c = np.linalg.pinv(Q @ Ac, rcond=rank_tol) @ (Q @ a)
    rhs = a - Ac @ alpha_c
    alpha_t = np.linalg.pinv(At, rcond=rank_tol) @ rhs if At.shape[1] else np.zeros(0)
    alpha = np.zeros(shifts.size)
    alpha[in_tau] = alpha_t
    alpha[~in_tau] = alpha_c
    resid = np.linalg.norm(A @ alpha - a)
    if resid > feas_tol * max(1.0, np.linalg.norm(a)):
        raise OutsideShiftSpanError(f"outside shift span (residual {resid:.3e})")
    return float(np.linalg.norm(alpha_c)), alpha


def nu1() -> float:
    return 0.8


def nu2(theta: float) -> float:
    return 1.0 / (4.0 * math.log(1.0 / theta) ** 2)


def classify_beta(beta, theta: float, lam: float):
    """Region label from a shift-correlation vector.

    Returns ``(label, |beta_(0)|, |beta_(1)|)``.
    """
    if not (0.0 < theta < 1.0):
        raise ValueError("theta must lie in (0, 1)")
    b = np.sort(np.abs(np.asarray(beta, dtype=np.float64)))[::-1]
    b0, b1 = float(b[0]), float(b[1]) if b.size > 1 else 0.0
    if b1 >= nu1() * b0:
        label = "NegativeCurvature"
    elif b1 >= nu2(theta) * lam:
        label = "LargeGradient"
    else:
        label = "ConvexNearShift"
    return label, b0, b1


def classify_region(a, a0, theta: float, lam: float):
    """Region label from the two largest ``|beta|`` entries of ``a``."""
    return classify_beta(beta_of(a, a0), theta, lam)


@dataclass
class ShiftSpaceView:
    beta: np.ndarray
    alpha: np.ndarray | None
    tau: tuple = ()
    region: str = "Unclassified"
    shifts: np.ndarray = field(default=None)


def shift_view(a, a0, theta: float, lam: float, tau=()) -> ShiftSpaceView:
    beta = beta_of(a, a0)
    region, _, _ = classify_region(a, a0, theta, lam)
    alpha = None
    if tau:
        try:
            _, alpha = d_alpha(a, a0, tau)
        except OutsideShiftSpanError:
            alpha = None
    return ShiftSpaceView(beta, alpha, tuple(int(t) for t in tau), region, shift_indices(_vals(a0).size))


def diagnostic_report(a, a0, n: int, theta: float, lam: float, tau=(), top_k: int = 5) -> dict:
    """JSON-ready diagnostics: top-k beta, region, d_alpha, coherences."""
    from .datagen import shift_coherence, truncated_shift_coherence

    beta = beta_of(a, a0)
    shifts = shift_indices(_vals(a0).size)
    order = np.argsort(-np.abs(beta), kind="stable")[:top_k]
    region, b0, b1 = classify_region(a, a0, theta, lam)
    try:
        dist = d_alpha(a, a0, tau)[0] if tau else None
    except OutsideShiftSpanError:
        dist = None
    return {
        "beta_top_k": [{"shift": int(shifts[i]), "beta": float(beta[i])} for i in order],
        "region": region,
        "beta0": b0,
        "beta1": b1,
        "d_alpha": dist,
        "tau": [int(t) for t in tau],
        "mu": shift_coherence(a0, n),
        "truncated_mu": truncated_shift_coherence(a0),
    }


# Closed-form Gaussian expectations, g ~ N(0, 1).

def oracle_erf_b(b: float, lam: float, s: float) -> float:
    """``0.5*erf((lam+s)/(sqrt2|b|)) + 0.5*erf((lam-s)/(sqrt2|b|))``; b = 0 by limits."""
    if b == 0:
        return 0.5 * float(np.sign(lam + s)) + 0.5 * float(np.sign(lam - s))
    r = math.sqrt(2.0) * abs(b)
    return 0.5 * float(erf((lam + s) / r)) + 0.5 * float(erf((lam - s) / r))


def oracle_smoothed_soft(b: float, lam: float, s: float) -> float:
    """``E[g * S_lam(b*g + s)] = b * (1 - erf_b(lam, s))``."""
    if b == 0:
        return 0.0
    return b * (1.0 - oracle_erf_b(b, lam, s))


def oracle_f_b(b: float, lam: float, s: float) -> float:
    if b == 0:
        return 0.0
    ab = abs(b)
    u, w = (lam + s) / ab, (lam - s) / ab
    return (u * math.exp(-0.5 * u * u) + w * math.exp(-0.5 * w * w)) / math.sqrt(2.0 * math.pi)


def oracle_smoothed_indicator(b: float, lam: float, s: float) -> float:
    """``E[g**2 * 1{|b*g + s| > lam}] = 1 - erf_b + f_b``."""
    if b == 0:
        return 1.0 if abs(s) > lam else 0.0
    return 1.0 - oracle_erf_b(b, lam, s) + oracle_f_b(b, lam, s)
