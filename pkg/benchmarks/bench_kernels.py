#!/usr/bin/env python3
"""Benchmark the compiled kernels against the numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import math
import time

import numpy as np

from autolabel3d.kernels import pure

try:
    from autolabel3d.kernels import _native as native
except ImportError:
    native = None


def timed(fn, *args, repeats=3):
    best = math.inf
    for _ in range(repeats):
        start = time.perf_counter()
        result = fn(*args)
        best = min(best, time.perf_counter() - start)
    return best, result


def bench(name, workloads, repeats):
    print(f"\n{name}")
    print(f"  {'workload':<28} {'pure':>10} {'native':>10} {'speedup':>9}")
    for label, fn_name, args in workloads:
        t_pure, ref = timed(getattr(pure, fn_name), *args, repeats=repeats)
        if native is None:
            print(f"  {label:<28} {1e3 * t_pure:>8.2f}ms {'-':>10} {'-':>9}")
            continue
        t_nat, out = timed(getattr(native, fn_name), *args, repeats=repeats)
        if fn_name == "dbscan_labels":
            assert np.array_equal(ref, out), "backend mismatch"
        print(
            f"  {label:<28} {1e3 * t_pure:>8.2f}ms {1e3 * t_nat:>8.2f}ms {t_pure / t_nat:>8.1f}x"
        )


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()
    if native is None:
        print("compiled kernels not available; showing pure timings only")

    rng = np.random.default_rng(0)
    blob = lambda n, k: np.concatenate(
        [rng.normal(scale=0.4, size=(n // k, 2)) + rng.uniform(-20, 20, 2) for _ in range(k)]
    )
    angles = np.deg2rad(np.arange(90.0))

    bench(
        "dbscan_labels (eps=0.9, min_pts=3)",
        [
            (f"{n} pts, {k} blobs", "dbscan_labels", (blob(n, k), 0.9, 3))
            for n, k in ((500, 5), (2000, 10), (5000, 20))
        ],
        args.repeats,
    )
    bench(
        "lshape_scores (90 angles)",
        [
            (f"{n} pts", "lshape_scores", (rng.normal(scale=2.0, size=(n, 2)), angles))
            for n in (200, 1000, 5000)
        ],
        args.repeats,
    )
    bench(
        "nearest_neighbors",
        [
            (
                f"{n} -> {m} pts",
                "nearest_neighbors",
                (rng.normal(size=(n, 3)), rng.normal(size=(m, 3))),
            )
            for n, m in ((500, 500), (2000, 2000), (5000, 5000))
        ],
        args.repeats,
    )


if __name__ == "__main__":
    main()
