# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner kernels: sum-of-products term combination and a
compensated weighted reduction.  Semantics match pykernels exactly; see
that module's docstring for the contracts."""

import numpy as np

cimport numpy as cnp

cnp.import_array()

IMPLEMENTATION = "cython"


def combine_terms(coeffs, row_ptr, factor_idx, factors):
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] c = np.ascontiguousarray(coeffs, dtype=np.complex128)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] rp = np.ascontiguousarray(row_ptr, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] fi = np.ascontiguousarray(factor_idx, dtype=np.int64)
    cdef cnp.ndarray[cnp.complex128_t, ndim=2] f = np.ascontiguousarray(factors, dtype=np.complex128)
    cdef Py_ssize_t n_rows = c.shape[0]
    cdef Py_ssize_t n = f.shape[1]
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] out = np.zeros(n, dtype=np.complex128)
    cdef Py_ssize_t r, k, j, lo, hi
    cdef double complex acc
    for j in range(n):
        for r in range(n_rows):
            lo = rp[r]
            hi = rp[r + 1]
            acc = c[r]
            for k in range(lo, hi):
                acc = acc * f[fi[k], j]
            out[j] = out[j] + acc
    return out


def kahan_wsum(values, weights):
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] v = np.ascontiguousarray(values, dtype=np.complex128)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] w = np.ascontiguousarray(weights, dtype=np.float64)
    cdef Py_ssize_t n = v.shape[0]
    cdef Py_ssize_t i
    cdef double sr = 0.0, si = 0.0, cr = 0.0, ci = 0.0
    cdef double yr, yi, tr, ti
    for i in range(n):
        yr = v[i].real * w[i] - cr
        tr = sr + yr
        cr = (tr - sr) - yr
        sr = tr
        yi = v[i].imag * w[i] - ci
        ti = si + yi
        ci = (ti - si) - yi
        si = ti
    return complex(sr, si)
