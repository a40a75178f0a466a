"""The marginalized objective ``phi_rho`` on the sphere and its derivatives.

For a kernel ``a`` of length ``p`` and observation ``y`` of length ``n``::

    corr  = ccorr(y, a)                  # C_a^T y
    x*    = prox_{lam*rho}(corr)
    phi   = lam*rho(x*) + 0.5*||corr - x*||^2 - 0.5*||corr||^2 + 0.5*||y||^2
    egrad = -ccorr(y, x*)[:p]
    Hess  = -L^T diag(prox'(corr)) L,    L a = ccorr(y, a)

All values include the ``0.5*||y||^2`` constant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from .signal import Observation, ccorr
from .surrogate import SurrogateParams, prox_rho, prox_rho_derivative, rho, soft_threshold

__all__ = [
    "ObjectiveContext",
    "EvalBundle",
    "EigenSolveError",
    "NotOnSphereError",
    "eval_phi_rho",
    "eval_phi_ell1",
    "egrad_phi_rho",
    "egrad_phi_ell1",
    "rgrad_phi_rho",
    "rhess_vec",
    "hessian_matrix",
    "min_eigpair",
    "tangent_project",
]

SPHERE_TOL = 1e-8


class NotOnSphereError(ValueError):
    pass


class EigenSolveError(RuntimeError):
    """Eigensolver hit its iteration cap; carries the best iterate found."""

    def __init__(self, msg, eigval, eigvec):
        super().__init__(msg)
        self.eigval = eigval
        self.eigvec = eigvec


@dataclass(frozen=True)
class ObjectiveContext:
    y: Observation
    p: int
    params: SurrogateParams

    def __post_init__(self):
        if not isinstance(self.y, Observation):
            object.__setattr__(self, "y", Observation(self.y))
        if self.p > self.y.n:
            raise ValueError(f"kernel length p={self.p} exceeds n={self.y.n}")

    @property
    def n(self) -> int:
        return self.y.n

    @property
    def lam(self) -> float:
        return self.params.lam

    def with_params(self, params: SurrogateParams) -> "ObjectiveContext":
        return ObjectiveContext(self.y, self.p, params)


@dataclass(frozen=True)
class EvalBundle:
    value: float
    corr: np.ndarray
    xstar: np.ndarray


def _check_point(a, ctx: ObjectiveContext) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.shape != (ctx.p,):
        raise ValueError(f"kernel must have shape ({ctx.p},), got {a.shape}")
    if abs(np.linalg.norm(a) - 1.0) > SPHERE_TOL:
        raise NotOnSphereError("kernel is not unit-norm; project onto the sphere first")
    return a


def tangent_project(a, v) -> np.ndarray:
    return v - (v @ a) * a


def _corr(a, ctx):
    return ccorr(ctx.y, a)


def _lift_back(u, ctx):
    """``L^T u``: correlate ``y`` against a length-n vector and keep the window."""
    return ccorr(ctx.y, u)[: ctx.p]


def eval_phi_rho(a, ctx: ObjectiveContext) -> EvalBundle:
    a = _check_point(a, ctx)
    corr = _corr(a, ctx)
    xs = prox_rho(corr, ctx.params)
    r = corr - xs
    value = ctx.lam * rho(xs, ctx.params.delta) + 0.5 * (r @ r) - 0.5 * (corr @ corr) + 0.5 * ctx.y.sqnorm
    return EvalBundle(float(value), corr, xs)


def eval_phi_ell1(a, ctx: ObjectiveContext) -> float:
    """``0.5*||y||^2 - 0.5*||S_lam[corr]||^2`` (the un-smoothed counterpart)."""
    a = _check_point(a, ctx)
    st = soft_threshold(_corr(a, ctx), ctx.lam)
    return float(0.5 * ctx.y.sqnorm - 0.5 * (st @ st))


def egrad_phi_rho(a, ctx: ObjectiveContext, bundle: EvalBundle | None = None) -> np.ndarray:
    if bundle is None:
        bundle = eval_phi_rho(a, ctx)
    return -_lift_back(bundle.xstar, ctx)


def egrad_phi_ell1(a, ctx: ObjectiveContext) -> np.ndarray:
    a = _check_point(a, ctx)
    return -_lift_back(soft_threshold(_corr(a, ctx), ctx.lam), ctx)


def rgrad_phi_rho(a, ctx: ObjectiveContext, bundle: EvalBundle | None = None) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    return tangent_project(a, egrad_phi_rho(a, ctx, bundle))


class _HessOp:
    """Matrix-free Riemannian Hessian at a fixed point."""

    def __init__(self, a, ctx: ObjectiveContext, bundle: EvalBundle | None = None):
        self.a = _check_point(a, ctx)
        self.ctx = ctx
        if bundle is None:
            bundle = eval_phi_rho(self.a, ctx)
        self.bundle = bundle
        self.diag = prox_rho_derivative(bundle.corr, ctx.params, xz=bundle.xstar)
        eg = -_lift_back(bundle.xstar, ctx)
        # sphere curvature term: -<egrad, a>, positive for sensible a
        self.curv = -float(eg @ self.a)
        self.egrad = eg

    def euclid(self, v):
        return -_lift_back(self.diag * _corr(v, self.ctx), self.ctx)

    def __call__(self, v):
        pv = tangent_project(self.a, v)
        return tangent_project(self.a, self.euclid(pv)) + self.curv * pv


def rhess_vec(a, v, ctx: ObjectiveContext, bundle: EvalBundle | None = None) -> np.ndarray:
    """Riemannian Hessian applied to a tangent vector ``v``.

    ``P (grad^2 phi) P v - <grad phi, a> P v`` with ``P`` the tangent projector.
    """
    a = _check_point(a, ctx)
    v = np.asarray(v, dtype=np.float64)
    if abs(v @ a) > 1e-8 * max(1.0, np.linalg.norm(v)):
        raise ValueError("v is not tangent to the sphere at a")
    return _HessOp(a, ctx, bundle)(v)


def hessian_matrix(a, ctx: ObjectiveContext, bundle: EvalBundle | None = None) -> np.ndarray:
    """Dense ``p x p`` Riemannian Hessian (for small problems and tests)."""
    op = _HessOp(a, ctx, bundle)
    eye = np.eye(ctx.p)
    P = eye - np.outer(op.a, op.a)
    H = np.column_stack([op(P[:, j]) for j in range(ctx.p)])
    return 0.5 * (H + H.T)


def _orient(vec, a, grad):
    vec = tangent_project(a, vec)
    vec = vec / np.linalg.norm(vec)
    if grad is not None and vec @ grad < 0:
        vec = -vec
    return vec


def _eig_power(op, a, p, tol, max_iter, v0):
    # spectral bound from a short power run on H
    rng_v = tangent_project(a, v0)
    u = rng_v / np.linalg.norm(rng_v)
    bound = 0.0
    for _ in range(20):
        w = op(u)
        nw = np.linalg.norm(w)
        if nw == 0:
            break
        bound = max(bound, nw)
        u = w / nw
    sigma = 1.01 * bound if bound > 0 else 1.0
    u = rng_v / np.linalg.norm(rng_v)
    best = (np.inf, u)
    for _ in range(max_iter):
        hu = op(u)
        lam = float(u @ hu)
        res = np.linalg.norm(hu - lam * u)
        if lam < best[0]:
            best = (lam, u)
        if res <= tol * max(1.0, abs(lam)):
            return lam, u
        w = sigma * u - hu
        w = tangent_project(a, w)
        u = w / np.linalg.norm(w)
    raise EigenSolveError("shifted power iteration hit its iteration cap", *best)


def _eig_lanczos(op, a, p, tol, max_iter, v0):
    # Push the normal direction a to the top of the spectrum so the smallest
    # eigenpair found is the tangent-space one.
    bound = 0.0
    u = v0 / np.linalg.norm(v0)
    for _ in range(5):
        w = op(u)
        bound = max(bound, np.linalg.norm(w))
        if bound == 0:
            break
        u = w / np.linalg.norm(w)
    lift = 2.0 * bound + 1.0

    def mv(v):
        v = np.ravel(v)
        return op(v) + lift * (a @ v) * a

    lin = spla.LinearOperator((p, p), matvec=mv, dtype=np.float64)
    # a tangent start vector keeps ARPACK away from the lifted direction
    start = tangent_project(a, v0)
    try:
        vals, vecs = spla.eigsh(lin, k=1, which="SA", v0=start, tol=tol * 0.1, maxiter=max_iter)
    except spla.ArpackNoConvergence as exc:
        if len(exc.eigenvalues):
            raise EigenSolveError("Lanczos hit its iteration cap", float(exc.eigenvalues[0]), exc.eigenvectors[:, 0])
        raise EigenSolveError("Lanczos hit its iteration cap", np.nan, start / np.linalg.norm(start))
    return float(vals[0]), vecs[:, 0]


def min_eigpair(a, ctx: ObjectiveContext, tol: float = 1e-6, *, method: str = "lanczos",
                max_iter: int = 500, v0=None, bundle: EvalBundle | None = None,
                grad=None):
    """Smallest eigenpair of the Riemannian Hessian on the tangent space at ``a``.

    Parameters
    ----------
    tol : float
        Residual target ``||H v - lam v|| <= tol * max(1, |lam|)``.
    method : {"lanczos", "power", "dense"}
        ``"power"`` is the shifted power iteration on ``sigma*I - H``.
        ``"dense"`` forms the full matrix.
    v0 : array, optional
        Start vector; defaults to a fixed deterministic vector.
    grad : array, optional
        Riemannian gradient used to orient the eigenvector so that
        ``<v, grad> >= 0``. Computed when omitted.

    Returns
    -------
    eigval : float
    eigvec : ndarray, unit norm and tangent at ``a``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    op = _HessOp(a, ctx, bundle)
    a = op.a
    p = ctx.p
    if grad is None:
        grad = tangent_project(a, op.egrad)
    if v0 is None:
        v0 = np.cos(np.arange(1, p + 1) * 0.7) + 0.1
    v0 = np.asarray(v0, dtype=np.float64)
    if np.linalg.norm(tangent_project(a, v0)) < 1e-8 * np.linalg.norm(v0):
        v0 = v0 + np.sin(np.arange(1, p + 1))

    if method == "dense":
        H = hessian_matrix(a, ctx, op.bundle)
        # orthonormal basis of the tangent space
        q, _ = np.linalg.qr(np.column_stack([a, np.eye(p)]))
        B = q[:, 1:p]
        w, V = np.linalg.eigh(B.T @ H @ B)
        lam, vec = float(w[0]), B @ V[:, 0]
    elif method == "power":
        lam, vec = _eig_power(op, a, p, tol, max_iter, v0)
    elif method == "lanczos":
        lam, vec = _eig_lanczos(op, a, p, tol, max_iter, v0)
    else:
        raise ValueError(f"unknown eigensolver method {method!r}")
    vec = _orient(vec, a, grad)
    return float(vec @ op(vec)), vec
