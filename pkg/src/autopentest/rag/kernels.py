"""Similarity scoring kernels for retrieval.

The scoring loop is the only numeric hot path in the system: one query against
every stored vector in a namespace. Two interchangeable builds ship, selected
with AUTOPENTEST_KERNEL=numpy|numba: a numba-compiled kernel and a pure-numpy
one. numpy is the default because the loop is a matvec and BLAS wins it at
every corpus size we measured; run benchmarks/kernel_bench.py to re-check on
other hardware before flipping the flag.
"""

from __future__ import annotations

import os

import numpy as np

KERNEL_ENV_VAR = "AUTOPENTEST_KERNEL"


def _cosine_scores_numpy(matrix: np.ndarray, query: np.ndarray) -> np.ndarray:
    return matrix @ query


try:
    from numba import njit

    @njit(cache=True)
    def _cosine_scores_numba(matrix: np.ndarray, query: np.ndarray) -> np.ndarray:  # pragma: no cover - exercised via dispatch
        rows, cols = matrix.shape
        out = np.empty(rows, dtype=np.float64)
        for i in range(rows):
            acc = 0.0
            for j in range(cols):
                acc += matrix[i, j] * query[j]
            out[i] = acc
        return out

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is an install-time dependency
    _cosine_scores_numba = None
    HAS_NUMBA = False


def active_kernel() -> str:
    """Which kernel dispatch will use: the env override, else numpy."""
    choice = os.environ.get(KERNEL_ENV_VAR, "").strip().lower()
    if choice == "numba":
        if not HAS_NUMBA:
            raise RuntimeError("AUTOPENTEST_KERNEL=numba but numba is not installed")
        return "numba"
    if choice and choice != "numpy":
        raise RuntimeError(f"unknown AUTOPENTEST_KERNEL value: {choice!r}")
    return "numpy"


def cosine_scores(matrix: np.ndarray, query: np.ndarray, kernel: str | None = None) -> np.ndarray:
    """Dot products of pre-normalized rows against a pre-normalized query,
    i.e. cosine similarities. `kernel` overrides the environment selection."""
    if matrix.ndim != 2 or query.ndim != 1 or matrix.shape[1] != query.shape[0]:
        raise ValueError(f"shape mismatch: matrix {matrix.shape}, query {query.shape}")
    selected = kernel if kernel is not None else active_kernel()
    if selected == "numpy":
        return _cosine_scores_numpy(matrix, query)
    if selected == "numba":
        if _cosine_scores_numba is None:
            raise RuntimeError("numba kernel requested but numba is not installed")
        return _cosine_scores_numba(
            np.ascontiguousarray(matrix, dtype=np.float64),
            np.ascontiguousarray(query, dtype=np.float64),
        )
    raise ValueError(f"unknown kernel: {selected!r}")


def normalize_rows(matrix: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return matrix / norms


def normalize_vector(vector: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(vector))
    return vector / norm if norm > 0.0 else vector
