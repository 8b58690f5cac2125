# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for the hot inner loops.

Same call surface as costream.kernels._numpy: small matrix products
(with transpose flags so gradient products avoid copies), stable row
softmax and its backward, and pairwise squared distances for mining.
"""

from libc.math cimport exp as c_exp

import numpy as np

cimport numpy as cnp

cnp.import_array()


def matmul(const double[:, :] a, const double[:, :] b, bint trans_a=False, bint trans_b=False):
    cdef Py_ssize_t m = a.shape[1] if trans_a else a.shape[0]
    cdef Py_ssize_t k = a.shape[0] if trans_a else a.shape[1]
    cdef Py_ssize_t k2 = b.shape[1] if trans_b else b.shape[0]
    cdef Py_ssize_t n = b.shape[0] if trans_b else b.shape[1]
    if k != k2:
        raise ValueError(f"matmul inner dims {k} and {k2} differ")
    out = np.zeros((m, n), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef Py_ssize_t i, j, p
    cdef double aip
    if not trans_a and not trans_b:
        for i in range(m):
            for p in range(k):
                aip = a[i, p]
                for j in range(n):
                    o[i, j] += aip * b[p, j]
    elif trans_a and not trans_b:
        for i in range(m):
            for p in range(k):
                aip = a[p, i]
                for j in range(n):
                    o[i, j] += aip * b[p, j]
    elif not trans_a and trans_b:
        for i in range(m):
            for j in range(n):
                aip = 0.0
                for p in range(k):
                    aip += a[i, p] * b[j, p]
                o[i, j] = aip
    else:
        for i in range(m):
            for p in range(k):
                aip = a[p, i]
                for j in range(n):
                    o[i, j] += aip * b[j, p]
    return out


def row_softmax(const double[:, :] x):
    cdef Py_ssize_t m = x.shape[0]
    cdef Py_ssize_t n = x.shape[1]
    out = np.empty((m, n), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef Py_ssize_t i, j
    cdef double hi, s
    for i in range(m):
        hi = x[i, 0]
        for j in range(1, n):
            if x[i, j] > hi:
                hi = x[i, j]
        s = 0.0
        for j in range(n):
            o[i, j] = c_exp(x[i, j] - hi)
            s += o[i, j]
        for j in range(n):
            o[i, j] /= s
    return out


def row_softmax_grad(const double[:, :] y, const double[:, :] gy):
    cdef Py_ssize_t m = y.shape[0]
    cdef Py_ssize_t n = y.shape[1]
    out = np.empty((m, n), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef Py_ssize_t i, j
    cdef double dot
    for i in range(m):
        dot = 0.0
        for j in range(n):
            dot += y[i, j] * gy[i, j]
        for j in range(n):
            o[i, j] = y[i, j] * (gy[i, j] - dot)
    return out


def pairwise_sqdist(const double[:, :] a, const double[:, :] b):
    cdef Py_ssize_t m = a.shape[0]
    cdef Py_ssize_t n = b.shape[0]
    cdef Py_ssize_t d = a.shape[1]
    if b.shape[1] != d:
        raise ValueError(f"pairwise_sqdist widths {a.shape[1]} and {b.shape[1]} differ")
    out = np.empty((m, n), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef Py_ssize_t i, j, p
    cdef double s, diff
    for i in range(m):
        for j in range(n):
            s = 0.0
            for p in range(d):
                diff = a[i, p] - b[j, p]
                s += diff * diff
            o[i, j] = s
    return out
