#!/usr/bin/env python3
"""Benchmark the retrieval scoring kernels: numba-compiled vs pure numpy.

Usage:
    python benchmarks/kernel_bench.py [--rows 20000] [--dim 1536] [--repeats 50]

The numbers justify (or refute) keeping the numba path as the default for the
one numeric hot loop in the system; everything else is I/O bound.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from autopentest.rag.kernels import (
    HAS_NUMBA,
    cosine_scores,
    normalize_rows,
    normalize_vector,
)


def time_kernel(kernel: str, matrix: np.ndarray, queries: np.ndarray, repeats: int) -> float:
    cosine_scores(matrix, queries[0], kernel=kernel)  # warmup / JIT compile
    started = time.perf_counter()
    for i in range(repeats):
        cosine_scores(matrix, queries[i % len(queries)], kernel=kernel)
    return (time.perf_counter() - started) / repeats


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--rows", type=int, default=20_000, help="stored vectors")
    parser.add_argument("--dim", type=int, default=1536, help="embedding dimension")
    parser.add_argument("--repeats", type=int, default=50)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    matrix = normalize_rows(rng.normal(size=(args.rows, args.dim)))
    queries = np.stack([normalize_vector(rng.normal(size=args.dim)) for _ in range(8)])

    print(f"corpus: {args.rows} x {args.dim}, {args.repeats} repeats per kernel\n")
    numpy_seconds = time_kernel("numpy", matrix, queries, args.repeats)
    print(f"numpy : {numpy_seconds * 1e3:8.3f} ms/query  "
          f"({args.rows / numpy_seconds / 1e6:6.1f} M vectors/s)")
    if HAS_NUMBA:
        numba_seconds = time_kernel("numba", matrix, queries, args.repeats)
        print(f"numba : {numba_seconds * 1e3:8.3f} ms/query  "
              f"({args.rows / numba_seconds / 1e6:6.1f} M vectors/s)")
        ratio = numpy_seconds / numba_seconds
        faster = "numba" if ratio > 1 else "numpy"
        print(f"\n{faster} is {max(ratio, 1 / ratio):.2f}x faster on this corpus")
    else:
        print("numba : not installed (pure-numpy fallback active)")


if __name__ == "__main__":
    main()
