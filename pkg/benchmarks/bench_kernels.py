"""Time the numba kernels against the pure-numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]

Both backends are imported in-process (the ``nb_*`` and ``np_*`` names are
always defined), so the env var is not needed here. The numba column excludes
the first-call compilation, which is reported separately.
"""
import argparse
import time
from unittest import mock

import numpy as np

from trapverify import _kernels as K
from trapverify.engine import run_mbqc
from trapverify.frame import find_undetectable
from trapverify.geometry import build_layout


def _time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _mbqc_job(n, m, seed):
    layout = build_layout(n, m)
    rng = np.random.default_rng(seed)
    angles = rng.integers(0, 8, size=layout.shape)

    def job():
        run_mbqc(layout, angles, rng=np.random.default_rng(seed))
    return job


def _scan_job(w):
    def job():
        find_undetectable(w)
    return job


def bench(name, job, kernel, repeat):
    with mock.patch.object(K, kernel, getattr(K, "nb_" + kernel)):
        t0 = time.perf_counter()
        job()
        first = time.perf_counter() - t0
        fast = _time(job, repeat)
    with mock.patch.object(K, kernel, getattr(K, "np_" + kernel)):
        slow = _time(job, repeat)
    print(f"{name:<28} {first:>10.4f} {fast:>10.4f} {slow:>10.4f} {slow / fast:>8.1f}x")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    print(f"{'case':<28} {'nb first':>10} {'numba':>10} {'numpy':>10} {'speedup':>9}")
    for n, m in ((2, 9), (4, 13), (6, 13)):
        bench(f"frontier n={n} m={m}", _mbqc_job(n, m, 7), "frontier", args.repeat)
    for w in (1, 2, 3):
        bench(f"frame_scan w={w}", _scan_job(w), "frame_scan", args.repeat)


if __name__ == "__main__":
    main()
