#!/usr/bin/env python3
"""Benchmark the JIT kernels against the pure-numpy fallbacks.

Runs the causal-attention pass and the index row scan at a few sizes
and prints per-call timings for both implementations. Kernel selection
in the package itself is controlled by RITE_NUMBA (see README); this
script always times both paths when numba is available.

Usage: python benchmarks/bench_kernels.py [--repeats N]
"""

from __future__ import annotations

import argparse
from time import perf_counter

import numpy as np

from rite import _kernels


def time_call(fn, *args, repeats: int, warmup: int = 2) -> float:
    for _ in range(warmup):
        fn(*args)
    start = perf_counter()
    for _ in range(repeats):
        fn(*args)
    return (perf_counter() - start) / repeats


def bench_attention(repeats: int) -> None:
    print(f"\ncausal attention (n_heads=4, d_head=16)")
    print(f"{'seq':>6} {'numpy (ms)':>12} {'numba (ms)':>12} {'speedup':>9}")
    rng = np.random.default_rng(0)
    for seq in (64, 128, 256, 512):
        q, k, v = (rng.normal(size=(4, seq, 16)) for _ in range(3))
        t_np = time_call(_kernels.causal_attention_numpy, q, k, v, repeats=repeats)
        if _kernels.HAS_NUMBA:
            t_jit = time_call(_kernels.causal_attention_jit, q, k, v, repeats=repeats)
            print(f"{seq:>6} {t_np * 1e3:>12.3f} {t_jit * 1e3:>12.3f} "
                  f"{t_np / t_jit:>8.2f}x")
        else:
            print(f"{seq:>6} {t_np * 1e3:>12.3f} {'n/a':>12} {'n/a':>9}")


def bench_scan(repeats: int) -> None:
    print(f"\nindex row scan (dim=64)")
    print(f"{'rows':>8} {'numpy (ms)':>12} {'numba (ms)':>12} {'speedup':>9}")
    rng = np.random.default_rng(1)
    for rows in (1_000, 10_000, 100_000):
        matrix = rng.normal(size=(rows, 64)).astype(np.float32)
        query = rng.normal(size=64)
        t_np = time_call(_kernels.dot_scores_numpy, matrix, query, repeats=repeats)
        if _kernels.HAS_NUMBA:
            t_jit = time_call(_kernels.dot_scores_jit, matrix, query, repeats=repeats)
            print(f"{rows:>8} {t_np * 1e3:>12.3f} {t_jit * 1e3:>12.3f} "
                  f"{t_np / t_jit:>8.2f}x")
        else:
            print(f"{rows:>8} {t_np * 1e3:>12.3f} {'n/a':>12} {'n/a':>9}")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=10)
    args = parser.parse_args()
    print(f"numba available: {_kernels.HAS_NUMBA}")
    bench_attention(args.repeats)
    bench_scan(args.repeats)


if __name__ == "__main__":
    main()
