"""Small dense kernels with a fixed floating-point evaluation order.

BLAS picks different micro-kernels depending on the block height, so the same
row can come out with different low bits when multiplied alone or inside a
larger block.  Incremental and recompute paths multiply different row subsets,
and bitwise comparisons between them (pruning, locality, determinism) need the
result of a row to depend on that row only.  ``rowmm`` accumulates the
inner dimension one rank-1 update at a time, which gives exactly that.
"""

from __future__ import annotations

import numpy as np


def rowmm(X: np.ndarray, W: np.ndarray) -> np.ndarray:
    """``X @ W`` where each output row depends only on the matching input row."""
    n = X.shape[0]
    k, m = W.shape
    if X.shape[1] != k:
        raise ValueError(f"shape mismatch {X.shape} @ {W.shape}")
    dtype = np.result_type(X.dtype, W.dtype)
    if n == 0 or k == 0:
        return np.zeros((n, m), dtype=dtype)
    out = X[:, 0:1] * W[0]
    for j in range(1, k):
        out += X[:, j : j + 1] * W[j]
    return out


def rowdot(X: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Row-wise dot product with a fixed accumulation order."""
    return rowmm(X, a.reshape(-1, 1))[:, 0]


def segment_starts(lengths: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Offsets of non-empty segments for ``ufunc.reduceat`` plus the non-empty mask."""
    lengths = np.asarray(lengths, dtype=np.int64)
    starts = np.zeros(len(lengths), dtype=np.int64)
    if len(lengths) > 1:
        np.cumsum(lengths[:-1], out=starts[1:])
    nonempty = lengths > 0
    return starts[nonempty], nonempty
