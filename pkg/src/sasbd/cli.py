"""Command-line front end.

Subcommands::

    sasbd gen      --config inst.json --out DIR        write planted instances
    sasbd solve    --instance FILE --out result.json   minimize (and optionally refine)
    sasbd refine   --instance FILE --kernel FILE       refinement from a given kernel
    sasbd diagnose --instance FILE --kernel FILE       shift-space report
    sasbd grid     --config grid.json --out DIR        success-rate grid

Exit codes: 0 on success (a stalled solver still counts, its status is in the
output), 2 on validation errors, 3 on I/O errors. The worker count of
``grid`` is read from ``SASBD_THREADS`` (default 1).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .datagen import InstanceSpec, derive_seed, load_instance, make_instance, save_instance, shift_coherence
from .minimize import MinimizeConfig, accelerated_rgd, curvilinear_search, init_a0, make_context
from .refine import RefineConfig, refine_loop
from .shiftspace import diagnostic_report, is_success, max_corr
from .signal import Kernel, project_sphere

log = logging.getLogger("sasbd")

EXIT_OK, EXIT_VALIDATION, EXIT_IO = 0, 2, 3
THREADS_ENV = "SASBD_THREADS"
GRID_SCHEMA = "sasbd-grid/1"
GRID_COLUMNS = ("p0", "theta", "trial", "seed", "success", "max_corr", "iters", "runtime_ms",
                "mu_measured", "status")
SOLVERS = ("curvilinear", "argd")

DIAGNOSTIC_SCHEMA = {
    "type": "object",
    "required": ["beta_top_k", "region", "d_alpha", "mu", "truncated_mu"],
    "properties": {
        "beta_top_k": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["shift", "beta"],
                "properties": {"shift": {"type": "integer"}, "beta": {"type": "number"}},
            },
        },
        "region": {"enum": ["NegativeCurvature", "LargeGradient", "ConvexNearShift", "Unclassified"]},
        "beta0": {"type": "number"},
        "beta1": {"type": "number"},
        "d_alpha": {"type": ["number", "null"]},
        "tau": {"type": "array", "items": {"type": "integer"}},
        "mu": {"type": "number"},
        "truncated_mu": {"type": "number"},
    },
}


class ValidationError(ValueError):
    pass


# ---------------------------------------------------------------- helpers


def _read_json(path) -> dict:
    text = Path(path).read_text()  # OSError -> exit 3
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise ValidationError(f"{path}: expected a JSON object")
    return data


def _write_json(path, obj) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _dataclass_from(cls, data: dict | None, what: str):
    data = dict(data or {})
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ValidationError(f"{what}: unknown field(s) {', '.join(unknown)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{what}: {exc}") from None


def _instance_spec(data: dict, seed=None) -> InstanceSpec:
    data = dict(data)
    if seed is not None:
        data["seed"] = seed
    for key in ("p0", "n", "theta"):
        if key not in data:
            raise ValidationError(f"instance config: missing field {key!r}")
    return _dataclass_from(InstanceSpec, data, "instance config")


def _load_kernel(path) -> np.ndarray:
    path = Path(path)
    if path.suffix == ".json":
        data = json.loads(path.read_text())
        vals = data.get("a_hat", data.get("a")) if isinstance(data, dict) else data
        if vals is None:
            raise ValidationError(f"{path}: no 'a' or 'a_hat' array")
        return np.asarray(vals, dtype=np.float64)
    return np.frombuffer(path.read_bytes(), dtype="<f8").astype(np.float64)


def _solver_configs(cfg: dict):
    mcfg = _dataclass_from(MinimizeConfig, cfg.get("minimize"), "minimize config")
    rdata = dict(cfg.get("refine") or {})
    rdata.setdefault("lambda0_mode", "data")
    rcfg = _dataclass_from(RefineConfig, rdata, "refine config")
    return mcfg, rcfg


def run_minimize(inst, solver: str, mcfg: MinimizeConfig, *, offset: int = 0):
    """Initialization plus the chosen first-phase solver on a planted instance."""
    if solver not in SOLVERS:
        raise ValidationError(f"solver must be one of {SOLVERS}")
    spec = inst.spec
    ctx = make_context(inst.y, spec.p0, spec.theta, mcfg)
    a_init = init_a0(inst.y, spec.p0, ctx, offset=offset)
    run = curvilinear_search if solver == "curvilinear" else accelerated_rgd
    return run(a_init, ctx, mcfg, theta=spec.theta)


# ---------------------------------------------------------------- commands


def cmd_gen(args) -> int:
    cfg = _read_json(args.config)
    count = int(cfg.pop("count", 1))
    if count < 1:
        raise ValidationError("instance config: count must be >= 1")
    base = _instance_spec(cfg, args.seed)
    out = Path(args.out)
    written = []
    for k in range(count):
        spec = dataclasses.replace(base, seed=base.seed + k)
        inst = make_instance(spec)
        meta_path, _ = save_instance(inst, out / f"instance_p{spec.p0}_s{spec.seed}")
        written.append(str(meta_path))
        print(f"{meta_path}: p0={spec.p0} n={spec.n} theta={spec.theta} family={spec.family} "
              f"seed={spec.seed} support={inst.x0.support.size}")
    return EXIT_OK


def _refine_result(a_start, inst, rcfg):
    a0 = inst.a0.values
    meta = {"theta": inst.spec.theta, "a0": a0}
    a_hat, x_hat, rtrace = refine_loop(a_start, inst.y, rcfg, meta)
    resid = np.linalg.norm(np.fft.irfft(np.fft.rfft(a_hat.values, inst.spec.n) * np.fft.rfft(x_hat.values),
                                        inst.spec.n) - inst.y.values) / np.linalg.norm(inst.y.values)
    return a_hat, x_hat, rtrace, float(resid)


def cmd_solve(args) -> int:
    inst = load_instance(args.instance)
    cfg = _read_json(args.config) if args.config else {}
    mcfg, rcfg = _solver_configs(cfg)
    a_min, trace = run_minimize(inst, args.solver, mcfg, offset=args.offset)
    result = {
        "instance": str(args.instance),
        "solver": args.solver,
        "status": trace.status,
        "iters": trace.iters,
        "a_hat": a_min.values.tolist(),
        "max_corr": max_corr(a_min, inst.a0),
        "success": bool(is_success(a_min, inst.a0)),
        "minimize_trace": trace.to_dict(),
    }
    if args.refine:
        try:
            a_hat, x_hat, rtrace, resid = _refine_result(a_min, inst, rcfg)
            result.update(
                a_hat=a_hat.values.tolist(),
                x_hat_support=x_hat.support.tolist(),
                refine_trace=rtrace.to_dict(),
                refine_status="ok",
                residual=resid,
                max_corr_refined=max_corr(a_hat, inst.a0),
            )
        except ValueError as exc:
            result["refine_status"] = f"failed: {exc}"
    _emit(args.out, result)
    return EXIT_OK


def cmd_refine(args) -> int:
    inst = load_instance(args.instance)
    a = _load_kernel(args.kernel)
    if a.size != inst.spec.p:
        raise ValidationError(f"kernel length {a.size} does not match p = 3*p0 - 2 = {inst.spec.p}")
    cfg = _read_json(args.config) if args.config else {}
    _, rcfg = _solver_configs(cfg)
    a_hat, x_hat, rtrace, resid = _refine_result(project_sphere(a), inst, rcfg)
    _emit(args.out, {
        "instance": str(args.instance),
        "a_hat": a_hat.values.tolist(),
        "x_hat_support": x_hat.support.tolist(),
        "residual": resid,
        "max_corr": max_corr(a_hat, inst.a0),
        "refine_trace": rtrace.to_dict(),
    })
    return EXIT_OK


def _parse_tau(text, p0):
    if text is None:
        return ()
    if text == "window":
        return tuple(range(-p0 + 1, p0))
    try:
        tau = tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise ValidationError(f"--tau: expected comma-separated integers or 'window', got {text!r}") from None
    bad = [t for t in tau if abs(t) > p0 - 1]
    if bad:
        raise ValidationError(f"--tau: shifts {bad} lie outside [-p0+1, p0-1]")
    return tau


def cmd_diagnose(args) -> int:
    inst = load_instance(args.instance)
    a = _load_kernel(args.kernel)
    spec = inst.spec
    if a.size != spec.p:
        raise ValidationError(f"kernel length {a.size} does not match p = 3*p0 - 2 = {spec.p}")
    a = project_sphere(a)
    lam = args.lam if args.lam is not None else MinimizeConfig().lam_for(spec.p0, spec.theta)
    tau = _parse_tau(args.tau, spec.p0)
    report = diagnostic_report(a, inst.a0, spec.n, spec.theta, lam, tau, args.top_k)
    _emit(args.out, report)
    return EXIT_OK


# ---------------------------------------------------------------- grid


@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
    p0: tuple
    theta: tuple
    trials: int = 10
    n: int | None = 2 ** 16
    n_factor: int | None = None
    family: str = "generic"
    solver: str = "argd"
    base_seed: int = 0
    minimize: dict = dataclasses.field(default_factory=dict)

    def __post_init__(self):
        if not self.p0 or not self.theta:
            raise ValueError("grids must be non-empty")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if any(not (0.0 < t < 1.0) for t in self.theta):
            raise ValueError("every theta must lie in (0, 1)")
        if self.solver not in SOLVERS:
            raise ValueError(f"solver must be one of {SOLVERS}")
        if (self.n is None) == (self.n_factor is None):
            raise ValueError("give exactly one of n and n_factor")

    def n_for(self, p0: int) -> int:
        return self.n if self.n is not None else self.n_factor * p0

    @classmethod
    def from_dict(cls, data: dict, base_seed=None) -> "ExperimentConfig":
        data = dict(data)
        th = data.get("theta")
        if isinstance(th, dict):
            # {"min": .., "max": .., "num": ..}: log-spaced
            try:
                th = np.geomspace(float(th["min"]), float(th["max"]), int(th["num"])).tolist()
            except (KeyError, ValueError) as exc:
                raise ValidationError(f"grid config: theta: {exc}") from None
        if th is not None:
            data["theta"] = tuple(float(t) for t in np.atleast_1d(th))
        if "p0" in data:
            data["p0"] = tuple(int(p) for p in np.atleast_1d(data["p0"]))
        if "n_factor" in data and "n" not in data:
            data["n"] = None
        if base_seed is not None:
            data["base_seed"] = base_seed
        for key in ("p0", "theta"):
            if key not in data:
                raise ValidationError(f"grid config: missing field {key!r}")
        return _dataclass_from(cls, data, "grid config")


def _grid_task(task):
    cfg_dict, p0, theta, trial, timings = task
    cfg = ExperimentConfig(**cfg_dict)
    seed = derive_seed(cfg.base_seed, p0, theta, trial)
    row = {"p0": p0, "theta": theta, "trial": trial, "seed": seed, "success": False,
           "max_corr": float("nan"), "iters": 0, "runtime_ms": None, "mu_measured": float("nan"),
           "status": "error"}
    t0 = time.perf_counter()
    try:
        spec = InstanceSpec(p0, cfg.n_for(p0), theta, cfg.family, seed)
        inst = make_instance(spec)
        row["mu_measured"] = shift_coherence(inst.a0, spec.n)
        mcfg = MinimizeConfig(**cfg.minimize)
        a_min, trace = run_minimize(inst, cfg.solver, mcfg)
        mc = max_corr(a_min, inst.a0)
        row.update(success=bool(mc > 0.95), max_corr=mc, iters=trace.iters, status=trace.status)
    except Exception as exc:  # one bad trial must not abort the grid
        row["status"] = f"error: {type(exc).__name__}: {exc}"
    if timings:
        row["runtime_ms"] = 1e3 * (time.perf_counter() - t0)
    return row


def _fmt(v):
    if isinstance(v, bool):
        return "1" if v else "0"
    if v is None:
        return "NA"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def grid_csv(rows, cfg: ExperimentConfig) -> str:
    buf = io.StringIO()
    buf.write(f"# schema: {GRID_SCHEMA}; sasbd {__version__}; solver={cfg.solver}; family={cfg.family}; "
              f"base_seed={cfg.base_seed}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(GRID_COLUMNS)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in GRID_COLUMNS])
    return buf.getvalue()


def grid_summary(rows, cfg: ExperimentConfig) -> dict:
    cells = []
    for p0 in sorted(set(cfg.p0)):
        for th in sorted(set(cfg.theta)):
            rs = [r for r in rows if r["p0"] == p0 and r["theta"] == th]
            succ = sum(r["success"] for r in rs)
            cells.append({"p0": p0, "theta": th, "trials": len(rs), "successes": succ,
                          "success_rate": succ / len(rs) if rs else float("nan"),
                          "errors": sum(r["status"].startswith("error") for r in rs)})
    return {"schema": GRID_SCHEMA, "config": dataclasses.asdict(cfg), "cells": cells}


def run_grid(cfg: ExperimentConfig, workers: int = 1, timings: bool = False):
    cfg_dict = dataclasses.asdict(cfg)
    tasks = [(cfg_dict, p0, th, k, timings)
             for p0 in sorted(set(cfg.p0)) for th in sorted(set(cfg.theta)) for k in range(cfg.trials)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(_grid_task, tasks))
    else:
        rows = [_grid_task(t) for t in tasks]
    rows.sort(key=lambda r: (r["p0"], r["theta"], r["trial"]))
    return rows


def _workers() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        w = int(raw)
    except ValueError:
        raise ValidationError(f"{THREADS_ENV} must be a positive integer (got {raw!r})") from None
    if w < 1:
        raise ValidationError(f"{THREADS_ENV} must be a positive integer (got {raw!r})")
    return w


def cmd_grid(args) -> int:
    cfg = ExperimentConfig.from_dict(_read_json(args.config), args.seed)
    if args.solver:
        cfg = dataclasses.replace(cfg, solver=args.solver)
    rows = run_grid(cfg, _workers(), args.timings)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "results.csv").write_text(grid_csv(rows, cfg))
    summary = grid_summary(rows, cfg)
    _write_json(out / "summary.json", summary)
    # plot-ready success-rate matrix: rows p0, columns theta
    thetas = sorted(set(cfg.theta))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["p0"] + [repr(t) for t in thetas])
    for p0 in sorted(set(cfg.p0)):
        rates = {c["theta"]: c["success_rate"] for c in summary["cells"] if c["p0"] == p0}
        w.writerow([p0] + [repr(rates[t]) for t in thetas])
    (out / "success_rate.csv").write_text(buf.getvalue())
    for c in summary["cells"]:
        print(f"p0={c['p0']:>5} theta={c['theta']:<8.4g} success {c['successes']}/{c['trials']}")
    return EXIT_OK


# ---------------------------------------------------------------- entry


def _emit(out, obj) -> None:
    if out:
        _write_json(out, obj)
    else:
        sys.stdout.write(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sasbd", description="Short-and-sparse blind deconvolution on the sphere.")
    ap.add_argument("--version", action="version", version=f"sasbd {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate planted instances")
    g.add_argument("--config", required=True, help="JSON with p0, n, theta, family, seed, count")
    g.add_argument("--seed", type=int)
    g.add_argument("--out", required=True, help="output directory")
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("solve", help="run the first phase (and optionally refinement)")
    s.add_argument("--instance", required=True)
    s.add_argument("--config", help="JSON with optional 'minimize' and 'refine' sections")
    s.add_argument("--solver", choices=SOLVERS, default="argd")
    s.add_argument("--refine", action="store_true")
    s.add_argument("--offset", type=int, default=0, help="data window offset for the initialization")
    s.add_argument("--seed", type=int, help="accepted for symmetry; solvers are deterministic")
    s.add_argument("--out")
    s.set_defaults(func=cmd_solve)

    r = sub.add_parser("refine", help="refine from a given kernel")
    r.add_argument("--instance", required=True)
    r.add_argument("--kernel", required=True, help=".json with 'a'/'a_hat' or raw little-endian float64")
    r.add_argument("--config")
    r.add_argument("--out")
    r.set_defaults(func=cmd_refine)

    d = sub.add_parser("diagnose", help="shift-space diagnostics of a kernel")
    d.add_argument("--instance", required=True)
    d.add_argument("--kernel", required=True)
    d.add_argument("--tau", help="comma-separated shifts, or 'window' for [-p0+1, p0-1]")
    d.add_argument("--lam", type=float, help="penalty for the region thresholds (default 0.5/sqrt(p0*theta))")
    d.add_argument("--top-k", type=int, default=5)
    d.add_argument("--out")
    d.set_defaults(func=cmd_diagnose)

    gr = sub.add_parser("grid", help="success-rate grid over (p0, theta)")
    gr.add_argument("--config", required=True)
    gr.add_argument("--seed", type=int, help="override base_seed")
    gr.add_argument("--solver", choices=SOLVERS)
    gr.add_argument("--out", required=True)
    gr.add_argument("--timings", action="store_true",
                    help="record runtime_ms (makes the CSV run-dependent)")
    gr.set_defaults(func=cmd_grid)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (ValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
