"""NumPy implementations of the bit-counting kernels.

Used when the compiled extension is unavailable (or disabled with
UNLINK_EVAL_NO_EXT=1).  Same contracts as the compiled versions: inputs are
C-contiguous uint64 matrices of packed template bits, one row per template.
Work is chunked so peak temporary memory stays bounded for large batches.
"""

from __future__ import annotations

import numpy as np

# rows per chunk; 2**14 rows x 64 words x 8 B = 8 MiB of temporaries
_CHUNK = 1 << 14


def popcount_rows(a: np.ndarray) -> np.ndarray:
    """Number of set bits in each row of a packed uint64 matrix."""
    a = np.ascontiguousarray(a, dtype=np.uint64)
    out = np.empty(a.shape[0], dtype=np.int64)
    for lo in range(0, a.shape[0], _CHUNK):
        hi = min(lo + _CHUNK, a.shape[0])
        out[lo:hi] = np.bitwise_count(a[lo:hi]).sum(axis=1, dtype=np.int64)
    return out


def hamming_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise Hamming distance between two packed uint64 matrices."""
    a = np.ascontiguousarray(a, dtype=np.uint64)
    b = np.ascontiguousarray(b, dtype=np.uint64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    out = np.empty(a.shape[0], dtype=np.int64)
    for lo in range(0, a.shape[0], _CHUNK):
        hi = min(lo + _CHUNK, a.shape[0])
        out[lo:hi] = np.bitwise_count(a[lo:hi] ^ b[lo:hi]).sum(axis=1, dtype=np.int64)
    return out
