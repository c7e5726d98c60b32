"""Time the compiled comparison-ODE kernel against the pure-Python fallback.

Usage::

    python benchmarks/bench_kernels.py [--instances N] [--repeat R] [--seed S]

Both kernels integrate the same random power-law instances; the script
reports the median wall time per instance, the speed-up, and the largest
disagreement between the two results.
"""
import argparse
import statistics
import sys
import time

import numpy as np

from dsmflow import kernels
from dsmflow.comparison import random_passing_instance
from dsmflow.gallery import rng_for


def _args(inst):
    pl = inst.powerlaw
    return (pl.gamma, pl.A, pl.ea, pl.B, pl.eb, pl.s0, pl.s1, pl.p, inst.g0, inst.grid)


def _time(fn, cases, repeat):
    per_case = []
    results = []
    for args in cases:
        times = []
        for _ in range(repeat):
            t0 = time.perf_counter()
            out = fn(*args)
            times.append(time.perf_counter() - t0)
        per_case.append(statistics.median(times))
        results.append(np.asarray(out[0], dtype=float))
    return per_case, results


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--instances", type=int, default=40)
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    if not kernels.COMPILED:
        print("compiled kernel unavailable (not built, or DSM_PURE_PYTHON is set); "
              "timing the fallback only")
    rng = rng_for(args.seed)
    cases = [_args(random_passing_instance(rng)) for _ in range(args.instances)]

    py_times, py_out = _time(kernels.integrate_powerlaw_py, cases, args.repeat)
    print(f"pure Python : median {statistics.median(py_times) * 1e3:8.3f} ms per instance")
    if not kernels.COMPILED:
        return 0
    c_times, c_out = _time(kernels.integrate_powerlaw, cases, args.repeat)
    diff = max(float(np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-300)))
               for a, b in zip(c_out, py_out))
    print(f"compiled    : median {statistics.median(c_times) * 1e3:8.3f} ms per instance")
    print(f"speed-up    : {statistics.median(py_times) / statistics.median(c_times):8.1f}x")
    print(f"max relative difference between kernels: {diff:.3g}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
