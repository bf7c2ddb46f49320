# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops: patch scatter (col2im) and dynamic time warping."""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs

cnp.import_array()

ctypedef fused real:
    float
    double


def col2im2d(real[:, ::1] cols, Py_ssize_t b, Py_ssize_t c, Py_ssize_t hp, Py_ssize_t wp,
             Py_ssize_t kh, Py_ssize_t kw, Py_ssize_t sh, Py_ssize_t sw,
             Py_ssize_t ho, Py_ssize_t wo):
    """Sum ``[B*ho*wo, C*kh*kw]`` patches onto a ``[B, C, hp, wp]`` canvas."""
    dtype = np.float32 if real is float else np.float64
    out = np.zeros((b, c, hp, wp), dtype=dtype)
    cdef real[:, :, :, ::1] canvas = out
    cdef Py_ssize_t n, y, x, ch, i, j, row, col, y0, x0
    with nogil:
        for n in range(b):
            for y in range(ho):
                y0 = y * sh
                for x in range(wo):
                    x0 = x * sw
                    row = (n * ho + y) * wo + x
                    col = 0
                    for ch in range(c):
                        for i in range(kh):
                            for j in range(kw):
                                canvas[n, ch, y0 + i, x0 + j] += cols[row, col]
                                col += 1
    return out


cdef double _dtw_core(const double[::1] a, const double[::1] b, double[::1] prev, double[::1] cur,
                      long[::1] lprev, long[::1] lcur, long *length) noexcept nogil:
    cdef Py_ssize_t n = a.shape[0], m = b.shape[0], i, j
    cdef double best, cand
    cdef long blen
    prev[0] = fabs(a[0] - b[0])
    lprev[0] = 1
    for j in range(1, m):
        prev[j] = prev[j - 1] + fabs(a[0] - b[j])
        lprev[j] = lprev[j - 1] + 1
    for i in range(1, n):
        cur[0] = prev[0] + fabs(a[i] - b[0])
        lcur[0] = lprev[0] + 1
        for j in range(1, m):
            best = prev[j - 1]
            blen = lprev[j - 1]
            cand = prev[j]
            if cand < best:
                best = cand
                blen = lprev[j]
            cand = cur[j - 1]
            if cand < best:
                best = cand
                blen = lcur[j - 1]
            cur[j] = best + fabs(a[i] - b[j])
            lcur[j] = blen + 1
        prev, cur = cur, prev
        lprev, lcur = lcur, lprev
    length[0] = lprev[m - 1]
    return prev[m - 1]


def dtw(const double[::1] a, const double[::1] b):
    """Return ``(cost, path_length)`` of the optimal alignment.

    Local cost ``|a_i - b_j|``; steps (1,1), (1,0), (0,1) with unit weight.
    Ties prefer the diagonal, then the vertical, then the horizontal step.
    """
    cdef Py_ssize_t m = b.shape[0]
    cdef double[::1] prev = np.empty(m, dtype=np.float64)
    cdef double[::1] cur = np.empty(m, dtype=np.float64)
    cdef long[::1] lprev = np.empty(m, dtype=np.int_)
    cdef long[::1] lcur = np.empty(m, dtype=np.int_)
    cdef long length
    cdef double cost
    with nogil:
        cost = _dtw_core(a, b, prev, cur, lprev, lcur, &length)
    return cost, int(length)


def dtw_many(const double[:, ::1] a, const double[:, ::1] b):
    """Row-by-row :func:`dtw` of two equally tall matrices."""
    cdef Py_ssize_t p = a.shape[0], m = b.shape[1], k
    if b.shape[0] != p:
        raise ValueError("a and b need the same number of rows")
    costs = np.empty(p, dtype=np.float64)
    lengths = np.empty(p, dtype=np.int_)
    cdef double[::1] c = costs
    cdef long[::1] ln = lengths
    cdef double[::1] prev = np.empty(m, dtype=np.float64)
    cdef double[::1] cur = np.empty(m, dtype=np.float64)
    cdef long[::1] lprev = np.empty(m, dtype=np.int_)
    cdef long[::1] lcur = np.empty(m, dtype=np.int_)
    with nogil:
        for k in range(p):
            c[k] = _dtw_core(a[k], b[k], prev, cur, lprev, lcur, &ln[k])
    return costs, lengths
