"""Reference implementations used as test oracles.

Nothing here imports the numerical kernels under test; each oracle is an
independent (slow, simple) evaluation of the same mathematical object.
"""

from __future__ import annotations

import math

import mpmath
import numpy as np
from scipy.optimize import minimize


def conv_loop(a, x):
    n = len(x)
    return np.array([sum(a[j] * x[(i - j) % n] for j in range(len(a))) for i in range(n)])


def corr_loop(y, a):
    n = len(y)
    return np.array([sum(a[j] * y[(i + j) % n] for j in range(len(a))) for i in range(n)])


def prox_mp(z, lam, delta, dps=40):
    """High-precision prox of ``lam*sqrt(x**2 + delta**2)`` by bracketed root finding."""
    with mpmath.workdps(dps):
        z, lam, delta = mpmath.mpf(z), mpmath.mpf(lam), mpmath.mpf(delta)
        if z == 0:
            return 0.0
        s = 1 if z > 0 else -1
        za = abs(z)
        f = lambda x: x + lam * x / mpmath.sqrt(x * x + delta * delta) - za  # noqa: E731
        root = mpmath.findroot(f, (mpmath.mpf(0), za), solver="anderson")
        return float(s * root)


def phi_rho_mp(a, y, lam, delta, dps=30):
    """``phi_rho`` by solving every prox entry in high precision."""
    p, n = len(a), len(y)
    corr = corr_loop(y, a)
    with mpmath.workdps(dps):
        total = mpmath.mpf(0)
        for c in corr:
            x = mpmath.mpf(prox_mp(c, lam, delta, dps))
            c = mpmath.mpf(c)
            total += lam * mpmath.sqrt(x * x + delta * delta) + (c - x) ** 2 / 2 - c * c / 2
        total += sum(mpmath.mpf(v) ** 2 for v in y) / 2
        return float(total)


def phi_rho_inner_min(a, y, lam, delta):
    """``phi_rho`` straight from its definition as a minimization over x."""
    a, y = np.asarray(a, float), np.asarray(y, float)
    n = len(y)

    def f(x):
        r = conv_loop_fast(a, x, n)
        val = 0.5 * x @ x - r @ y + 0.5 * y @ y + lam * np.sum(np.sqrt(x * x + delta * delta))
        grad = x - corr_fast(y, a, n) + lam * x / np.sqrt(x * x + delta * delta)
        return val, grad

    res = minimize(f, np.zeros(n), jac=True, method="L-BFGS-B",
                   options=dict(ftol=1e-15, gtol=1e-12, maxiter=20000))
    return float(res.fun)


def conv_loop_fast(a, x, n):
    out = np.zeros(n)
    for j, aj in enumerate(a):
        out += aj * np.roll(x, j)
    return out


def corr_fast(y, a, n):
    out = np.zeros(n)
    for j, aj in enumerate(a):
        out += aj * np.roll(y, -j)
    return out


def soft(z, lam):
    return np.sign(z) * np.maximum(np.abs(z) - lam, 0.0)


def lasso_ista(a, y, lam, iters=20000):
    """Plain (unaccelerated) proximal gradient Lasso with a dense operator."""
    n = len(y)
    C = np.column_stack([np.roll(np.r_[a, np.zeros(n - len(a))], k) for k in range(n)])
    L = np.linalg.norm(C, 2) ** 2
    x = np.zeros(n)
    for _ in range(iters):
        x = soft(x - C.T @ (C @ x - y) / L, lam / L)
    return x


def dense_conv_matrix(a, n):
    return np.column_stack([np.roll(np.r_[a, np.zeros(n - len(a))], k) for k in range(n)])


def d_alpha_qp(A, a, tau_mask):
    """``min ||alpha_c||^2 s.t. A alpha = a`` through the dense KKT system.

    Free coefficients on tau get a tiny ridge so the system stays
    nonsingular; the ridge is small enough not to affect 1e-8 comparisons.
    """
    m = A.shape[1]
    W = np.diag(np.where(tau_mask, 1e-14, 1.0))
    K = np.block([[W, A.T], [A, np.zeros((A.shape[0], A.shape[0]))]])
    rhs = np.r_[np.zeros(m), a]
    sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    alpha = sol[:m]
    return float(np.linalg.norm(alpha[~tau_mask])), alpha


def smoothed_soft_mc(b, lam, s, draws, rng):
    g = rng.standard_normal(draws)
    v = g * soft(b * g + s, lam)
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(draws))


def smoothed_indicator_mc(b, lam, s, draws, rng):
    g = rng.standard_normal(draws)
    v = g * g * (np.abs(b * g + s) > lam)
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(draws))
