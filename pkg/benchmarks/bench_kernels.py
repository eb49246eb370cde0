"""Compiled vs pure-Python kernel timings.

Usage: python benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import time

import numpy as np

from lmdbench import _kernels_py as python
from lmdbench import kernels


def _time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def penta_case(n):
    rng = np.random.default_rng(0)
    nm = n // 2 + 1
    e, c, a, b = (np.ascontiguousarray(rng.normal(size=(nm, n))) for _ in range(4))
    d = 6.0 + np.abs(rng.normal(size=(nm, n)))
    rhs = rng.normal(size=(nm, n)) + 1j * rng.normal(size=(nm, n))

    def run(mod):
        def go():
            x = rhs.copy()
            mod.penta_solve(e, *mod.penta_factor(e, c, d, a, b), x)
        return go
    return run


def march_case(n):
    x = (np.arange(n) + 0.5) / n
    X, Y = np.meshgrid(x, x)
    f = 0.5 * (1 - np.tanh((np.hypot(X - 0.5, Y - 0.5) - 0.25) * n / 1.5))
    f = np.ascontiguousarray(f)

    def run(mod):
        return lambda: mod.marching_segments(f, 0.5)
    return run


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if kernels.compiled is None:
        print("compiled extension not available; timing the Python kernels only")
    print(f"{'kernel':<22}{'n':>6}{'python ms':>12}{'compiled ms':>14}{'speedup':>10}")
    for name, case in (("penta factor+solve", penta_case), ("marching squares", march_case)):
        for n in (64, 256, 512):
            run = case(n)
            tp = _time(run(python), args.repeat) * 1e3
            if kernels.compiled is None:
                print(f"{name:<22}{n:>6}{tp:>12.2f}{'-':>14}{'-':>10}")
                continue
            tc = _time(run(kernels.compiled), args.repeat) * 1e3
            print(f"{name:<22}{n:>6}{tp:>12.2f}{tc:>14.3f}{tp / tc:>9.1f}x")


if __name__ == "__main__":
    main()
