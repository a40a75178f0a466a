"""Compare the numba and numpy backends of the smoothed prox.

Usage::

    python3 benchmarks/bench_prox.py [--sizes 4096 65536 524288] [--repeat 5]

Both backends are called directly, so a single process measures both. The
end-to-end objective timing at the bottom uses whichever backend the
``SASBD_DISABLE_NUMBA`` environment flag selects.
"""

import argparse
import time

import numpy as np

from sasbd import backend_name
from sasbd.surrogate import SurrogateParams, _prox_kernel, _prox_numpy


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[4096, 65536, 524288])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    params = SurrogateParams(0.3, 3e-3)
    lam, delta, tol = params.lam, params.delta, 1e-13
    print(f"active backend: {backend_name()}")
    if backend_name() != "numba":
        # the loop kernel is plain Python without numba; timing it says nothing useful
        args.sizes = []
        print("numba disabled: skipping the kernel comparison")
    if args.sizes:
        print(f"{'n':>9} {'numba ms':>10} {'numpy ms':>10} {'speedup':>8} {'max diff':>10}")
    for n in args.sizes:
        # BG-like input: mostly small entries with a few large ones
        z = rng.standard_normal(n) * 0.3 + (rng.random(n) < 0.05) * rng.standard_normal(n)
        out_a, out_b = np.empty(n), np.empty(n)
        _prox_kernel(z[:8].copy(), lam, delta, tol, np.empty(8))  # compile outside the timing
        t_nb = best_of(lambda: _prox_kernel(z, lam, delta, tol, out_a), args.repeat)
        t_np = best_of(lambda: _prox_numpy(z, lam, delta, tol, out_b), args.repeat)
        diff = float(np.max(np.abs(out_a - out_b)))
        print(f"{n:>9} {1e3 * t_nb:>10.3f} {1e3 * t_np:>10.3f} {t_np / t_nb:>8.1f} {diff:>10.2e}")

    from sasbd.datagen import InstanceSpec, make_instance
    from sasbd.minimize import init_a0, make_context
    from sasbd.objective import eval_phi_rho

    inst = make_instance(InstanceSpec(64, 2 ** 16, 0.01, "generic", args.seed))
    ctx = make_context(inst.y, 64, 0.01)
    a = init_a0(inst.y, 64, ctx).values
    eval_phi_rho(a, ctx)
    t = best_of(lambda: eval_phi_rho(a, ctx), args.repeat)
    print(f"eval_phi_rho at n=2**16 with the {backend_name()} backend: {1e3 * t:.3f} ms")


if __name__ == "__main__":
    main()
