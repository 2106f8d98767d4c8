# cython: language_level=3
"""Compiled inner loops.

Each kernel fixes the accumulation order of every output element so that
results are bit-identical to ``orthokd._fallback`` and to a naive
triple loop.  Do not reorder the reductions.
"""
import numpy as np

from libc.math cimport sqrt

DEF KBLOCK = 64


def gemm(const double[:, ::1] a, const double[:, ::1] b):
    """C = A @ B, each C[i, j] summed over k in ascending order."""
    cdef Py_ssize_t m = a.shape[0]
    cdef Py_ssize_t kk = a.shape[1]
    cdef Py_ssize_t n = b.shape[1]
    if b.shape[0] != kk:
        raise ValueError("inner dimensions differ")
    out = np.zeros((m, n), dtype=np.float64)
    cdef double[:, ::1] c = out
    cdef Py_ssize_t i, j, k, k0, k1
    cdef double a0, a1, a2, a3
    cdef double *c0
    cdef double *c1
    cdef double *c2
    cdef double *c3
    cdef const double *brow
    if n == 0:
        return out
    # k is blocked so a slab of B stays in cache and rows of C are taken four
    # at a time to reuse each loaded row of B; for every output element k
    # still increases monotonically.
    for k0 in range(0, kk, KBLOCK):
        k1 = min(k0 + KBLOCK, kk)
        i = 0
        while i + 4 <= m:
            c0 = &c[i, 0]
            c1 = &c[i + 1, 0]
            c2 = &c[i + 2, 0]
            c3 = &c[i + 3, 0]
            for k in range(k0, k1):
                a0 = a[i, k]
                a1 = a[i + 1, k]
                a2 = a[i + 2, k]
                a3 = a[i + 3, k]
                brow = &b[k, 0]
                for j in range(n):
                    c0[j] = c0[j] + a0 * brow[j]
                    c1[j] = c1[j] + a1 * brow[j]
                    c2[j] = c2[j] + a2 * brow[j]
                    c3[j] = c3[j] + a3 * brow[j]
            i += 4
        while i < m:
            c0 = &c[i, 0]
            for k in range(k0, k1):
                a0 = a[i, k]
                brow = &b[k, 0]
                for j in range(n):
                    c0[j] = c0[j] + a0 * brow[j]
            i += 1
    return out


def col_dist(const double[:, ::1] zs, const double[:, ::1] zt):
    """D[i, j] = ||zs[:, j] - zt[:, i]||, summed over rows in ascending order."""
    cdef Py_ssize_t b = zs.shape[0]
    cdef Py_ssize_t d = zs.shape[1]
    if zt.shape[0] != b or zt.shape[1] != d:
        raise ValueError("shape mismatch")
    out = np.zeros((d, d), dtype=np.float64)
    cdef double[:, ::1] acc = out
    cdef Py_ssize_t r, i, j
    cdef double t, diff
    for r in range(b):
        for i in range(d):
            t = zt[r, i]
            for j in range(d):
                diff = zs[r, j] - t
                acc[i, j] = acc[i, j] + diff * diff
    for i in range(d):
        for j in range(d):
            acc[i, j] = sqrt(acc[i, j])
    return out
