"""Bit-kernel dispatch: compiled extension when available, NumPy otherwise.

The hot loops of the whole package are row-wise popcount and Hamming
distance over packed binary templates.  At import time this module picks the
compiled implementation if it built successfully; setting the environment
variable UNLINK_EVAL_NO_EXT=1 forces the NumPy fallback (useful for the
benchmark and for debugging).
"""

from __future__ import annotations

import os

import numpy as np

from . import _kernels_py

USING_EXTENSION = False
_impl = _kernels_py

if os.environ.get("UNLINK_EVAL_NO_EXT", "") != "1":
    try:
        from . import _kernels as _ext
    except ImportError:
        pass
    else:
        _impl = _ext
        USING_EXTENSION = True


def popcount_rows(a: np.ndarray) -> np.ndarray:
    """Set-bit count of each row of a packed uint64 matrix, shape (n,)."""
    return _impl.popcount_rows(a)


def hamming_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise Hamming distance between equally shaped packed matrices."""
    return _impl.hamming_rows(a, b)


def pack_rows(bits: np.ndarray) -> np.ndarray:
    """Pack a (n, L) 0/1 uint8 matrix into a (n, ceil(L/64)) uint64 matrix.

    Bit j of a row lands in word j//64; rows are zero-padded to a multiple
    of 64 bits, which is harmless for XOR and popcount.
    """
    bits = np.ascontiguousarray(bits, dtype=np.uint8)
    if bits.ndim == 1:
        bits = bits[None, :]
    n, length = bits.shape
    pad = (-length) % 64
    if pad:
        bits = np.pad(bits, ((0, 0), (0, pad)))
    packed = np.packbits(bits, axis=1, bitorder="little")
    return packed.view(np.uint64).reshape(n, -1)


def unpack_rows(packed: np.ndarray, length: int) -> np.ndarray:
    """Inverse of pack_rows: recover the (n, length) 0/1 uint8 matrix."""
    packed = np.ascontiguousarray(packed, dtype=np.uint64)
    bits = np.unpackbits(packed.view(np.uint8), axis=1, bitorder="little")
    return np.ascontiguousarray(bits[:, :length])
