# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels for the encoder convolution and masked softmax.

The convolution lays the batch out as one padded slab so that each filter tap
is a single BLAS dgemm over every sentence at once; rows that straddle two
sentences are computed and then discarded.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, INFINITY
from libc.string cimport memcpy
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()


cdef inline void _gemm(char *ta, char *tb, int m, int n, int k, double *a, int lda,
                       double *b, int ldb, double beta, double *c, int ldc) noexcept nogil:
    cdef double one = 1.0
    dgemm(ta, tb, &m, &n, &k, &one, a, &lda, b, &ldb, &beta, c, &ldc)


cdef cnp.ndarray _padded_slab(double[:, :, ::1] x, int half):
    cdef Py_ssize_t B = x.shape[0], L = x.shape[1], D = x.shape[2]
    cdef Py_ssize_t P = L + 2 * half, b
    cdef cnp.ndarray xp = np.zeros((B * P, D))
    cdef double[:, ::1] xpv = xp
    if L * D > 0:
        for b in range(B):
            memcpy(&xpv[b * P + half, 0], &x[b, 0, 0], L * D * sizeof(double))
    return xp


def conv1d_same_forward(x, filters, bias):
    cdef double[:, :, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[:, :, ::1] wv = np.ascontiguousarray(filters, dtype=np.float64)
    cdef double[::1] bv = np.ascontiguousarray(bias, dtype=np.float64)
    cdef int w = wv.shape[0], din = wv.shape[1], dout = wv.shape[2]
    cdef int half = w // 2
    cdef Py_ssize_t B = xv.shape[0], L = xv.shape[1]
    cdef Py_ssize_t P = L + 2 * half
    cdef Py_ssize_t R = B * P - 2 * half
    out = np.empty((B, L, dout))
    if B == 0 or L == 0:
        return out
    cdef double[:, ::1] xp = _padded_slab(xv, half)
    cdef cnp.ndarray big = np.empty((R, dout))
    cdef double[:, ::1] bigv = big
    cdef double[:, :, ::1] ov = out
    cdef Py_ssize_t r, c, b, j
    for r in range(R):
        for c in range(dout):
            bigv[r, c] = bv[c]
    with nogil:
        for j in range(w):
            _gemm(b'N', b'N', dout, <int>R, din, &wv[j, 0, 0], dout,
                  &xp[j, 0], din, 1.0, &bigv[0, 0], dout)
        for b in range(B):
            memcpy(&ov[b, 0, 0], &bigv[b * P, 0], L * dout * sizeof(double))
    return out


def conv1d_same_backward(grad, x, filters):
    cdef double[:, :, ::1] gv = np.ascontiguousarray(grad, dtype=np.float64)
    cdef double[:, :, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[:, :, ::1] wv = np.ascontiguousarray(filters, dtype=np.float64)
    cdef int w = wv.shape[0], din = wv.shape[1], dout = wv.shape[2]
    cdef int half = w // 2
    cdef Py_ssize_t B = xv.shape[0], L = xv.shape[1]
    cdef Py_ssize_t P = L + 2 * half
    cdef Py_ssize_t R = B * P - 2 * half
    gx = np.zeros((B, L, din))
    gw = np.zeros((w, din, dout))
    gb = np.zeros(dout)
    if B == 0 or L == 0:
        return gx, gw, gb
    cdef double[:, ::1] xp = _padded_slab(xv, half)
    # grad rows in slab layout; straddling rows stay zero
    cdef double[:, ::1] gbig = np.zeros((R, dout))
    cdef double[:, ::1] gxp = np.zeros((B * P, din))
    cdef double[:, :, ::1] gxv = gx
    cdef double[:, :, ::1] gwv = gw
    cdef double[::1] gbv = gb
    cdef Py_ssize_t b, j, t, c
    with nogil:
        for b in range(B):
            memcpy(&gbig[b * P, 0], &gv[b, 0, 0], L * dout * sizeof(double))
            for t in range(L):
                for c in range(dout):
                    gbv[c] += gv[b, t, c]
        for j in range(w):
            _gemm(b'N', b'T', dout, din, <int>R, &gbig[0, 0], dout,
                  &xp[j, 0], din, 0.0, &gwv[j, 0, 0], dout)
            _gemm(b'T', b'N', din, <int>R, dout, &wv[j, 0, 0], dout,
                  &gbig[0, 0], dout, 1.0, &gxp[j, 0], din)
        for b in range(B):
            memcpy(&gxv[b, 0, 0], &gxp[b * P + half, 0], L * din * sizeof(double))
    return gx, gw, gb


def masked_softmax_forward(x, mask):
    cdef double[:, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef const cnp.npy_bool[:, ::1] mv = np.ascontiguousarray(mask, dtype=np.bool_)
    cdef Py_ssize_t R = xv.shape[0], L = xv.shape[1], i, j
    out = np.zeros((R, L))
    cdef double[:, ::1] ov = out
    cdef double m, s
    with nogil:
        for i in range(R):
            m = -INFINITY
            for j in range(L):
                if mv[i, j] and xv[i, j] > m:
                    m = xv[i, j]
            s = 0.0
            for j in range(L):
                if mv[i, j]:
                    ov[i, j] = exp(xv[i, j] - m)
                    s += ov[i, j]
            for j in range(L):
                ov[i, j] /= s
    return out


def masked_softmax_backward(y, gy):
    cdef double[:, ::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef double[:, ::1] gv = np.ascontiguousarray(gy, dtype=np.float64)
    cdef Py_ssize_t R = yv.shape[0], L = yv.shape[1], i, j
    out = np.empty((R, L))
    cdef double[:, ::1] ov = out
    cdef double dot
    with nogil:
        for i in range(R):
            dot = 0.0
            for j in range(L):
                dot += gv[i, j] * yv[i, j]
            for j in range(L):
                ov[i, j] = yv[i, j] * (gv[i, j] - dot)
    return out
