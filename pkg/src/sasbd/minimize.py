"""First-phase minimization of ``phi_rho`` over the sphere.

Two solvers are provided:

* :func:`curvilinear_search` combines the Riemannian gradient with a
  negative-curvature direction, ``a+ = P_S(a - t*g - t**2*v)``.
* :func:`accelerated_rgd` is a momentum variant of Riemannian gradient
  descent built on the exponential and logarithm maps of the sphere.

Both are deterministic: the same instance, configuration and start point
give the same iterates bit for bit.
"""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .objective import (
    EigenSolveError,
    ObjectiveContext,
    egrad_phi_ell1,
    egrad_phi_rho,
    eval_phi_rho,
    min_eigpair,
    tangent_project,
)
from .signal import DegenerateProjectionError, Kernel, Observation, project_sphere, zero_pad_window
from .surrogate import SurrogateParams

__all__ = [
    "MinimizeConfig",
    "MinimizeTrace",
    "make_context",
    "init_a0",
    "exp_map",
    "log_map",
    "curvilinear_search",
    "accelerated_rgd",
]

TRACE_COLUMNS = ("iter", "phi", "grad_norm", "step", "used_curvature")


@dataclass(frozen=True)
class MinimizeConfig:
    """Scalars of the first phase.

    Fields left as ``None`` are derived from ``(n, theta, lam)`` by
    :meth:`resolve`: ``delta = 1e-2 * lam``, ``eta_v = 0.1 * n*theta*lam``,
    ``t_max = 0.1 / (n*theta)`` and ``grad_tol = 1e-6 * n*theta``.

    ``argd_armijo_c`` scales the sufficient-decrease term of the momentum
    solver, ``phi(a+) - phi(w) < -c * t * ||g||**2``. With ``c = 1`` the
    test can only pass where the objective curves downward along ``g``, so
    the default is 0.5.
    """

    lambda_scale: float = 0.5
    delta: float | None = None
    eta_v: float | None = None
    t_max: float | None = None
    K1: int = 500
    grad_tol: float | None = None
    armijo_shrink: float = 0.5
    momentum_eta: float = 0.9
    max_halvings: int = 60
    argd_armijo_c: float = 0.5
    argd_t0: float = 1.0
    warm_start: bool = True
    eig_method: str = "lanczos"
    eig_tol: float = 1e-6

    def __post_init__(self):
        if self.t_max is not None and not self.t_max > 0:
            raise ValueError("t_max must be positive")
        if not (0.0 <= self.momentum_eta < 1.0):
            raise ValueError("momentum_eta must lie in [0, 1)")
        if self.eta_v is not None and self.eta_v < 0:
            raise ValueError("eta_v must be non-negative")
        if not (0.0 < self.armijo_shrink < 1.0):
            raise ValueError("armijo_shrink must lie in (0, 1)")
        if self.K1 < 0 or self.max_halvings < 1:
            raise ValueError("K1 must be >= 0 and max_halvings >= 1")
        if not (0.0 < self.argd_armijo_c <= 1.0):
            raise ValueError("argd_armijo_c must lie in (0, 1]")
        if not (0.0 < self.argd_t0 <= 1.0):
            raise ValueError("argd_t0 must lie in (0, 1]")

    def lam_for(self, p0: int, theta: float) -> float:
        return self.lambda_scale / math.sqrt(p0 * theta)

    def resolve(self, n: int, theta: float, lam: float) -> "MinimizeConfig":
        """Fill the derived defaults for a problem of size ``n`` and rate ``theta``."""
        nt = n * theta
        return replace(
            self,
            delta=1e-2 * lam if self.delta is None else self.delta,
            eta_v=0.1 * nt * lam if self.eta_v is None else self.eta_v,
            t_max=0.1 / nt if self.t_max is None else self.t_max,
            grad_tol=1e-6 * nt if self.grad_tol is None else self.grad_tol,
        )


@dataclass
class MinimizeTrace:
    """Per-iteration record of a run.

    ``decrease`` and ``required`` hold the two sides of the Armijo test of
    each accepted step: the step was accepted because
    ``decrease < -required``, with ``decrease = phi(new) - phi(reference)``.
    """

    phi: list = field(default_factory=list)
    grad_norm: list = field(default_factory=list)
    step: list = field(default_factory=list)
    used_curvature: list = field(default_factory=list)
    wall_ms: list = field(default_factory=list)
    decrease: list = field(default_factory=list)
    required: list = field(default_factory=list)
    eigval: list = field(default_factory=list)
    status: str = "running"
    iters: int = 0

    def log(self, phi, gnorm, step, curv, wall_ms, decrease=np.nan, required=np.nan, eigval=np.nan):
        self.phi.append(float(phi))
        self.grad_norm.append(float(gnorm))
        self.step.append(float(step))
        self.used_curvature.append(bool(curv))
        self.wall_ms.append(float(wall_ms))
        self.decrease.append(float(decrease))
        self.required.append(float(required))
        self.eigval.append(float(eigval))

    def armijo_violations(self) -> int:
        """Number of logged accepted steps whose Armijo inequality fails."""
        d = np.asarray(self.decrease)
        r = np.asarray(self.required)
        ok = np.isnan(d) | (d < -r)
        return int(np.count_nonzero(~ok))

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for k in range(len(self.phi)):
            w.writerow([k, repr(self.phi[k]), repr(self.grad_norm[k]), repr(self.step[k]),
                        int(self.used_curvature[k])])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "iters": self.iters,
            "phi": self.phi,
            "grad_norm": self.grad_norm,
            "step": self.step,
            "used_curvature": self.used_curvature,
        }


def _vals(a) -> np.ndarray:
    return np.asarray(getattr(a, "values", a), dtype=np.float64)


def make_context(y, p0: int, theta: float, cfg: MinimizeConfig | None = None,
                 lam: float | None = None) -> ObjectiveContext:
    """Objective context with ``lam = lambda_scale / sqrt(p0*theta)`` and ``p = 3*p0 - 2``."""
    cfg = cfg or MinimizeConfig()
    lam = cfg.lam_for(p0, theta) if lam is None else lam
    delta = 1e-2 * lam if cfg.delta is None else cfg.delta
    return ObjectiveContext(y if isinstance(y, Observation) else Observation(y), 3 * p0 - 2,
                            SurrogateParams(lam, delta))


def init_a0(y, p0: int, ctx: ObjectiveContext, *, offset: int = 0, use_ell1: bool = False) -> Kernel:
    """Data-driven start: one generalized power step from a padded data window.

    ``a0 = -P_S grad phi(P_S [0; y[offset:offset+p0]; 0])``. Set
    ``use_ell1`` to take the gradient of ``phi_ell1`` instead of ``phi_rho``.
    """
    yv = _vals(y)
    n = yv.size
    if n < 3 * p0 - 2:
        raise ValueError(f"need n >= 3*p0 - 2 (n={n}, p0={p0})")
    if ctx.p != 3 * p0 - 2:
        raise ValueError(f"context kernel length {ctx.p} does not match 3*p0 - 2 = {3 * p0 - 2}")
    window = np.take(yv, np.arange(offset, offset + p0), mode="wrap")
    try:
        start = project_sphere(zero_pad_window(window))
        grad = egrad_phi_ell1(start, ctx) if use_ell1 else egrad_phi_rho(start, ctx)
        return Kernel(-project_sphere(grad))
    except DegenerateProjectionError as exc:
        raise DegenerateProjectionError(
            f"{exc}; the data window at offset {offset} gives no usable start, "
            "try a different window offset"
        ) from None


def exp_map(a, u) -> np.ndarray:
    """``cos(||u||) a + sin(||u||) u/||u||`` for ``u`` tangent at ``a``."""
    a, u = _vals(a), _vals(u)
    nu = np.linalg.norm(u)
    if abs(a @ u) > 1e-8 * max(1.0, nu):
        raise ValueError("u is not tangent at a")
    if nu < 1e-12:
        return a.copy()
    return math.cos(nu) * a + math.sin(nu) * (u / nu)


def log_map(a, b) -> np.ndarray:
    """Tangent vector at ``a`` pointing to ``b`` with length ``arccos<a, b>``."""
    a, b = _vals(a), _vals(b)
    c = float(np.clip(a @ b, -1.0, 1.0))
    d = tangent_project(a, b - a)
    nd = np.linalg.norm(d)
    if nd < 1e-14:
        if c < 0:
            raise ValueError("antipodal points: log map direction is undefined")
        return np.zeros_like(a)
    return math.acos(c) * d / nd


def _eig(a, ctx, cfg, bundle, g, v0=None):
    try:
        return min_eigpair(a, ctx, cfg.eig_tol, method=cfg.eig_method, bundle=bundle, grad=g, v0=v0)
    except EigenSolveError as exc:
        # the best iterate is still a usable descent direction estimate
        v = tangent_project(a, exc.eigvec)
        nv = np.linalg.norm(v)
        if not np.isfinite(exc.eigval) or nv == 0:
            return 0.0, np.zeros_like(a)
        v = v / nv
        if v @ g < 0:
            v = -v
        return float(exc.eigval), v


def curvilinear_search(a0, ctx: ObjectiveContext, cfg: MinimizeConfig | None = None, *,
                       theta: float | None = None):
    """Curvilinear descent with negative-curvature steps.

    Each step tries ``t = t_max, t_max*s, t_max*s**2, ...`` (``s`` is
    ``armijo_shrink``) until
    ``phi(a+) < phi(a) - 0.5*(t*||g||**2 + 0.5*t**4*eta_v*||v||**2)``.

    ``theta`` sets the derived defaults of ``cfg``; when omitted it is
    recovered from ``ctx.lam`` and ``cfg.lambda_scale``.

    Returns
    -------
    a_bar : Kernel
    trace : MinimizeTrace
        ``status`` is ``"converged"``, ``"max_iter"`` or ``"stalled"``.
    """
    cfg = _resolved(ctx, cfg, theta)
    a = project_sphere(_vals(a0))
    trace = MinimizeTrace()
    bundle = eval_phi_rho(a, ctx)
    v_prev = None
    for k in range(cfg.K1 + 1):
        t_start = time.perf_counter()
        g = tangent_project(a, egrad_phi_rho(a, ctx, bundle))
        gn = float(np.linalg.norm(g))
        if math.isfinite(cfg.eta_v):
            # the previous eigenvector is a good Lanczos start for the next one
            eigval, v = _eig(a, ctx, cfg, bundle, g, v_prev)
            v_prev = v if np.any(v) else None
        else:
            eigval, v = np.nan, np.zeros_like(a)
        use_v = bool(eigval < -cfg.eta_v)
        if not use_v:
            v = np.zeros_like(a)
        if gn <= cfg.grad_tol and not use_v:
            trace.status = "converged"
            trace.log(bundle.value, gn, 0.0, False, _ms(t_start), eigval=eigval)
            break
        if k == cfg.K1:
            trace.status = "max_iter"
            trace.log(bundle.value, gn, 0.0, False, _ms(t_start), eigval=eigval)
            break
        vv = float(v @ v)
        t = cfg.t_max
        accepted = False
        for _ in range(cfg.max_halvings):
            cand = project_sphere(a - t * g - t * t * v)
            nb = eval_phi_rho(cand, ctx)
            # the curvature term is absent when v = 0 (also keeps eta_v = inf finite)
            req = 0.5 * (t * gn * gn + (0.5 * t ** 4 * cfg.eta_v * vv if use_v else 0.0))
            dec = nb.value - bundle.value
            if dec < -req:
                accepted = True
                break
            t *= cfg.armijo_shrink
        if not accepted:
            trace.status = "stalled"
            trace.log(bundle.value, gn, 0.0, use_v, _ms(t_start), eigval=eigval)
            break
        trace.log(bundle.value, gn, t, use_v, _ms(t_start), dec, req, eigval)
        a, bundle = cand, nb
    trace.iters = max(len(trace.phi) - 1, 0)
    return Kernel(project_sphere(a)), trace


def accelerated_rgd(a0, ctx: ObjectiveContext, cfg: MinimizeConfig | None = None, *,
                    theta: float | None = None):
    """Riemannian gradient descent with geodesic momentum.

    ``w = Exp_{a_k}(eta * u_k)`` where ``u_k`` is the velocity of the
    geodesic from ``a_{k-1}`` to ``a_k``, taken at ``a_k``; then
    ``a_{k+1} = Exp_w(t*g)`` with ``g = -grad phi(w)`` and ``t`` backtracked
    until ``phi(a_{k+1}) - phi(w) < -c*t*||g||**2``. If the momentum point is
    worse than ``a_k`` the momentum is dropped for that step, so the
    recorded objective never increases.
    """
    cfg = _resolved(ctx, cfg, theta)
    a = project_sphere(_vals(a0))
    a_prev = a
    trace = MinimizeTrace()
    bundle = eval_phi_rho(a, ctx)
    t_prev = cfg.argd_t0
    for k in range(cfg.K1 + 1):
        t_start = time.perf_counter()
        w, wb, used_momentum = a, bundle, False
        if cfg.momentum_eta > 0 and k > 0:
            u = -log_map(a, a_prev)
            if np.any(u):
                w_try = project_sphere(exp_map(a, cfg.momentum_eta * u))
                wb_try = eval_phi_rho(w_try, ctx)
                if wb_try.value <= bundle.value:
                    w, wb, used_momentum = w_try, wb_try, True
        g = -tangent_project(w, egrad_phi_rho(w, ctx, wb))
        gn = float(np.linalg.norm(g))
        if gn <= cfg.grad_tol:
            trace.status = "converged"
            trace.log(bundle.value, gn, 0.0, used_momentum, _ms(t_start))
            break
        if k == cfg.K1:
            trace.status = "max_iter"
            trace.log(bundle.value, gn, 0.0, used_momentum, _ms(t_start))
            break
        t = min(cfg.argd_t0, 2.0 * t_prev) if cfg.warm_start else cfg.argd_t0
        accepted = False
        for _ in range(cfg.max_halvings):
            cand = project_sphere(exp_map(w, t * g))
            nb = eval_phi_rho(cand, ctx)
            req = cfg.argd_armijo_c * t * gn * gn
            dec = nb.value - wb.value
            if dec < -req:
                accepted = True
                break
            t *= cfg.armijo_shrink
        if not accepted:
            trace.status = "stalled"
            trace.log(bundle.value, gn, 0.0, used_momentum, _ms(t_start))
            break
        trace.log(bundle.value, gn, t, used_momentum, _ms(t_start), dec, req)
        t_prev = t
        a_prev, a, bundle = a, cand, nb
    trace.iters = max(len(trace.phi) - 1, 0)
    return Kernel(project_sphere(a)), trace


def _ms(t0: float) -> float:
    return 1e3 * (time.perf_counter() - t0)


def _resolved(ctx: ObjectiveContext, cfg, theta) -> MinimizeConfig:
    cfg = cfg or MinimizeConfig()
    if theta is None:
        # recover theta from lam = lambda_scale / sqrt(p0*theta)
        p0 = (ctx.p + 2) // 3
        theta = (cfg.lambda_scale / ctx.lam) ** 2 / p0
    return cfg.resolve(ctx.n, theta, ctx.lam)
