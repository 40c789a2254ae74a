# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled convolution kernels for weak-system assembly and moving averages."""

import numpy as np
cimport numpy as cnp
from libc.string cimport memset

cnp.import_array()

# leaves of the pairwise reduction are summed directly
cdef enum:
    LEAF = 32


cdef void _pairwise(const double[:, ::1] X, const double[:, ::1] W,
                    const cnp.int64_t[::1] offsets, Py_ssize_t center,
                    Py_ssize_t lo, Py_ssize_t hi, double[:, ::1] buf,
                    Py_ssize_t level) noexcept nogil:
    cdef Py_ssize_t S = W.shape[0]
    cdef Py_ssize_t J = X.shape[1]
    cdef Py_ssize_t f, s, j, row, mid
    cdef double w
    cdef double *acc = &buf[level, 0]
    cdef double *tmp
    if hi - lo <= LEAF:
        memset(acc, 0, S * J * sizeof(double))
        for f in range(lo, hi):
            row = center + offsets[f]
            for s in range(S):
                w = W[s, f]
                if w == 0.0:
                    continue
                for j in range(J):
                    acc[s * J + j] += w * X[row, j]
        return
    mid = lo + (hi - lo) // 2
    _pairwise(X, W, offsets, center, lo, mid, buf, level + 1)
    tmp = &buf[level + 1, 0]
    for j in range(S * J):
        acc[j] = tmp[j]
    _pairwise(X, W, offsets, center, mid, hi, buf, level + 1)
    for j in range(S * J):
        acc[j] += tmp[j]


def accumulate(const double[:, ::1] X, const cnp.int64_t[::1] centers,
               const cnp.int64_t[::1] offsets, const double[:, ::1] W):
    """out[k, s, j] = sum_f W[s, f] * X[centers[k] + offsets[f], j], pairwise summed."""
    cdef Py_ssize_t K = centers.shape[0]
    cdef Py_ssize_t F = offsets.shape[0]
    cdef Py_ssize_t S = W.shape[0]
    cdef Py_ssize_t J = X.shape[1]
    cdef Py_ssize_t k, i, depth = 2
    cdef Py_ssize_t span = F
    while span > LEAF:
        span = (span + 1) // 2
        depth += 1
    out = np.zeros((K, S, J), dtype=np.float64)
    cdef double[:, :, ::1] o = out
    buf_arr = np.zeros((depth, max(S * J, 1)), dtype=np.float64)
    cdef double[:, ::1] buf = buf_arr
    with nogil:
        for k in range(K):
            _pairwise(X, W, offsets, centers[k], 0, F, buf, 0)
            for i in range(S * J):
                o[k, i // J, i % J] = buf[0, i]
    return out


def moving_sum_lastaxis(const double[:, ::1] Y, Py_ssize_t width):
    """Windowed sums of length ``width`` along rows of an already padded array."""
    cdef Py_ssize_t R = Y.shape[0]
    cdef Py_ssize_t L = Y.shape[1]
    cdef Py_ssize_t n = L - width + 1
    cdef Py_ssize_t r, i, f
    cdef double acc
    out = np.empty((R, n), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for r in range(R):
            for i in range(n):
                acc = 0.0
                for f in range(width):
                    acc += Y[r, i + f]
                o[r, i] = acc
    return out
