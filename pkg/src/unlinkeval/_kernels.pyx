# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled bit-counting kernels over packed uint64 template matrices."""

import numpy as np

cimport cython
from libc.stdint cimport int64_t, uint64_t

cdef extern from *:
    """
    #if defined(__GNUC__) || defined(__clang__)
    static inline unsigned long long unlink_popcount64(unsigned long long x) {
        return (unsigned long long)__builtin_popcountll(x);
    }
    #else
    /* SWAR fallback for compilers without the builtin */
    static inline unsigned long long unlink_popcount64(unsigned long long x) {
        x = x - ((x >> 1) & 0x5555555555555555ULL);
        x = (x & 0x3333333333333333ULL) + ((x >> 2) & 0x3333333333333333ULL);
        x = (x + (x >> 4)) & 0x0F0F0F0F0F0F0F0FULL;
        return (x * 0x0101010101010101ULL) >> 56;
    }
    #endif
    """
    uint64_t unlink_popcount64(uint64_t x) nogil


def popcount_rows(a):
    """Number of set bits in each row of a packed uint64 matrix."""
    cdef const uint64_t[:, ::1] av = np.ascontiguousarray(a, dtype=np.uint64)
    cdef Py_ssize_t n = av.shape[0], w = av.shape[1]
    out = np.empty(n, dtype=np.int64)
    cdef int64_t[::1] ov = out
    cdef Py_ssize_t i, j
    cdef uint64_t acc
    with nogil:
        for i in range(n):
            acc = 0
            for j in range(w):
                acc += unlink_popcount64(av[i, j])
            ov[i] = <int64_t>acc
    return out


def hamming_rows(a, b):
    """Row-wise Hamming distance between two packed uint64 matrices."""
    cdef const uint64_t[:, ::1] av = np.ascontiguousarray(a, dtype=np.uint64)
    cdef const uint64_t[:, ::1] bv = np.ascontiguousarray(b, dtype=np.uint64)
    if av.shape[0] != bv.shape[0] or av.shape[1] != bv.shape[1]:
        raise ValueError(
            f"shape mismatch: {(av.shape[0], av.shape[1])} vs {(bv.shape[0], bv.shape[1])}"
        )
    cdef Py_ssize_t n = av.shape[0], w = av.shape[1]
    out = np.empty(n, dtype=np.int64)
    cdef int64_t[::1] ov = out
    cdef Py_ssize_t i, j
    cdef uint64_t acc
    with nogil:
        for i in range(n):
            acc = 0
            for j in range(w):
                acc += unlink_popcount64(av[i, j] ^ bv[i, j])
            ov[i] = <int64_t>acc
    return out
