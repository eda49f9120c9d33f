# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Fused pairwise kernels for one-hidden-layer critics on concatenated inputs.

For a critic ``f([x, y]) = w . act(x Wx + y Wy + b1) + b2`` the first layer
separates into row terms ``A = x Wx + b1`` and column terms ``B = y Wy``.
These kernels evaluate the full ``n x m`` score matrix and its backward pass
without materialising the ``n x m x hidden`` activation tensor.
"""
from libc.math cimport tanh

import numpy as np


cdef inline double _relu_dot(const double* a, const double* b, const double* w,
                             Py_ssize_t h) noexcept nogil:
    cdef double acc = 0.0, z
    cdef Py_ssize_t k
    for k in range(h):
        z = a[k] + b[k]
        acc += w[k] * (z if z > 0.0 else 0.0)
    return acc


cdef inline double _tanh_dot(const double* a, const double* b, const double* w,
                             Py_ssize_t h) noexcept nogil:
    cdef double acc = 0.0
    cdef Py_ssize_t k
    for k in range(h):
        acc += w[k] * tanh(a[k] + b[k])
    return acc


def pair_forward(const double[:, ::1] A, const double[:, ::1] B,
                 const double[::1] w, double b, int act):
    cdef Py_ssize_t n = A.shape[0], m = B.shape[0], h = A.shape[1]
    cdef Py_ssize_t i, j
    out = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] S = out
    if n == 0 or m == 0:
        return out
    with nogil:
        for i in range(n):
            for j in range(m):
                if act == 0:
                    S[i, j] = _relu_dot(&A[i, 0], &B[j, 0], &w[0], h) + b
                else:
                    S[i, j] = _tanh_dot(&A[i, 0], &B[j, 0], &w[0], h) + b
    return out


cdef inline void _relu_grad(const double* a, const double* b, const double* w,
                            double g, double* d, double* u, Py_ssize_t h) noexcept nogil:
    cdef Py_ssize_t k
    cdef double z, on
    for k in range(h):
        z = a[k] + b[k]
        on = 1.0 if z > 0.0 else 0.0
        d[k] = g * w[k] * on
        u[k] = g * z * on


cdef inline void _tanh_grad(const double* a, const double* b, const double* w,
                            double g, double* d, double* u, Py_ssize_t h) noexcept nogil:
    cdef Py_ssize_t k
    cdef double t
    for k in range(h):
        t = tanh(a[k] + b[k])
        d[k] = g * w[k] * (1.0 - t * t)
        u[k] = g * t


cdef inline void _axpy1(double* dst, const double* src, Py_ssize_t h) noexcept nogil:
    cdef Py_ssize_t k
    for k in range(h):
        dst[k] += src[k]


def pair_backward(const double[:, ::1] A, const double[:, ::1] B,
                  const double[::1] w, const double[:, ::1] G, int act):
    """Return (dA, dB, dw) for the loss sum_ij G[i, j] * S[i, j]."""
    cdef Py_ssize_t n = A.shape[0], m = B.shape[0], h = A.shape[1]
    cdef Py_ssize_t i, j
    cdef double g
    dA_arr = np.zeros((n, h), dtype=np.float64)
    dB_arr = np.zeros((m, h), dtype=np.float64)
    dw_arr = np.zeros(h, dtype=np.float64)
    # scratch rows: grad wrt hidden pre-activation, and g * activation
    scratch = np.empty((2, h), dtype=np.float64)
    cdef double[:, ::1] dA = dA_arr
    cdef double[:, ::1] dB = dB_arr
    cdef double[::1] dw = dw_arr
    cdef double[:, ::1] sc = scratch
    if n == 0 or m == 0 or h == 0:
        return dA_arr, dB_arr, dw_arr
    with nogil:
        for i in range(n):
            for j in range(m):
                g = G[i, j]
                if g == 0.0:
                    continue
                if act == 0:
                    _relu_grad(&A[i, 0], &B[j, 0], &w[0], g, &sc[0, 0], &sc[1, 0], h)
                else:
                    _tanh_grad(&A[i, 0], &B[j, 0], &w[0], g, &sc[0, 0], &sc[1, 0], h)
                _axpy1(&dA[i, 0], &sc[0, 0], h)
                _axpy1(&dB[j, 0], &sc[0, 0], h)
                _axpy1(&dw[0], &sc[1, 0], h)
    return dA_arr, dB_arr, dw_arr
