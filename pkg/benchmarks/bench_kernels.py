"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--sizes 1000,10000]

Prints one row per kernel and size with the best-of-``repeat`` time of each
backend and the speed-up. Without a compiled build only the fallback is timed.
"""
import argparse
import timeit

import numpy as np

from shrinkerkit import _kernels_py as fallback
from shrinkerkit import kernels


def cases(n, rng):
    lower = rng.uniform(-1, 0, n)
    upper = rng.uniform(-1, 0, n)
    diag = 2.5 + rng.uniform(0, 1, n)
    rhs = rng.normal(size=n)
    u = np.linspace(0, np.pi, n)
    x, y = -np.cos(u), np.sin(u) + 1.5
    s = np.linspace(0, 1, n)
    vals = np.column_stack((np.cos(6 * s), np.sin(6 * s)))
    q = np.linspace(0, 1, 2 * n)
    m = max(8, int(np.sqrt(n)) * 4)
    A = np.cumsum(rng.normal(size=(m, 2)), axis=0)
    B = np.cumsum(rng.normal(size=(m, 2)), axis=0) + 5
    ends = (kernels.END_CLAMPED, kernels.END_CLAMPED)
    return {
        "tridiag_solve": lambda mod: mod.tridiag_solve(lower, diag, upper, rhs),
        "cyclic_tridiag_solve": lambda mod: mod.cyclic_tridiag_solve(lower, diag, upper, rhs),
        "curve_step": lambda mod: mod.curve_step(x, y, 1e-6, *ends, True, False),
        "spline_eval": lambda mod: mod.spline_eval(s, vals, q, False),
        f"polyline_distance ({m}x{m})": lambda mod: mod.polyline_distance(A, B),
    }


def best(fn, mod, repeat):
    number = 1
    while timeit.timeit(lambda: fn(mod), number=number) < 0.05:
        number *= 4
    return min(timeit.repeat(lambda: fn(mod), number=number, repeat=repeat)) / number


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--sizes", default="1000,10000,100000")
    args = p.parse_args(argv)
    rng = np.random.default_rng(0)
    compiled = kernels.compiled
    print(f"backend in use: {kernels.BACKEND}")
    print(f"{'kernel':32s} {'n':>8s} {'python [ms]':>12s} {'compiled [ms]':>14s} {'speed-up':>9s}")
    for n in (int(v) for v in args.sizes.split(",")):
        for name, fn in cases(n, rng).items():
            tp = best(fn, fallback, args.repeat)
            if compiled is None:
                print(f"{name:32s} {n:8d} {1e3 * tp:12.3f} {'-':>14s} {'-':>9s}")
                continue
            tc = best(fn, compiled, args.repeat)
            print(f"{name:32s} {n:8d} {1e3 * tp:12.3f} {1e3 * tc:14.3f} {tp / tc:9.1f}")


if __name__ == "__main__":
    main()
