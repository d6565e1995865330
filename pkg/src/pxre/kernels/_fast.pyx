# cython: boundscheck=False, wraparound=False, cdivision=True
"""Fused float64 kernels for the training hot loop.

Same contracts as kernels.pure; each function makes a single pass per row
instead of materializing numpy temporaries.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log, sqrt

cnp.import_array()


def softmax2d(double[:, ::1] x):
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1]
    out_arr = np.empty((n, d), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef double m, s
    with nogil:
        for i in range(n):
            m = x[i, 0]
            for j in range(1, d):
                if x[i, j] > m:
                    m = x[i, j]
            s = 0.0
            for j in range(d):
                out[i, j] = exp(x[i, j] - m)
                s += out[i, j]
            for j in range(d):
                out[i, j] /= s
    return out_arr


def softmax2d_backward(double[:, ::1] y, double[:, ::1] dy):
    cdef Py_ssize_t n = y.shape[0], d = y.shape[1]
    dx_arr = np.empty((n, d), dtype=np.float64)
    cdef double[:, ::1] dx = dx_arr
    cdef Py_ssize_t i, j
    cdef double dot
    with nogil:
        for i in range(n):
            dot = 0.0
            for j in range(d):
                dot += dy[i, j] * y[i, j]
            for j in range(d):
                dx[i, j] = y[i, j] * (dy[i, j] - dot)
    return dx_arr


def layernorm2d(double[:, ::1] x, double[::1] gamma, double[::1] beta, double eps):
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1]
    y_arr = np.empty((n, d), dtype=np.float64)
    xhat_arr = np.empty((n, d), dtype=np.float64)
    inv_std_arr = np.empty(n, dtype=np.float64)
    cdef double[:, ::1] y = y_arr
    cdef double[:, ::1] xhat = xhat_arr
    cdef double[::1] inv_std = inv_std_arr
    cdef Py_ssize_t i, j
    cdef double mu, var, diff, istd
    with nogil:
        for i in range(n):
            mu = 0.0
            for j in range(d):
                mu += x[i, j]
            mu /= d
            var = 0.0
            for j in range(d):
                diff = x[i, j] - mu
                var += diff * diff
            var /= d
            istd = 1.0 / sqrt(var + eps)
            inv_std[i] = istd
            for j in range(d):
                xhat[i, j] = (x[i, j] - mu) * istd
                y[i, j] = xhat[i, j] * gamma[j] + beta[j]
    return y_arr, xhat_arr, inv_std_arr


def layernorm2d_backward(
    double[:, ::1] dy, double[:, ::1] xhat, double[::1] inv_std, double[::1] gamma
):
    cdef Py_ssize_t n = dy.shape[0], d = dy.shape[1]
    dx_arr = np.empty((n, d), dtype=np.float64)
    dgamma_arr = np.zeros(d, dtype=np.float64)
    dbeta_arr = np.zeros(d, dtype=np.float64)
    cdef double[:, ::1] dx = dx_arr
    cdef double[::1] dgamma = dgamma_arr
    cdef double[::1] dbeta = dbeta_arr
    cdef Py_ssize_t i, j
    cdef double m1, m2, dyg
    with nogil:
        for i in range(n):
            m1 = 0.0
            m2 = 0.0
            for j in range(d):
                dyg = dy[i, j] * gamma[j]
                m1 += dyg
                m2 += dyg * xhat[i, j]
            m1 /= d
            m2 /= d
            for j in range(d):
                dyg = dy[i, j] * gamma[j]
                dx[i, j] = (dyg - m1 - xhat[i, j] * m2) * inv_std[i]
                dgamma[j] += dy[i, j] * xhat[i, j]
                dbeta[j] += dy[i, j]
    return dx_arr, dgamma_arr, dbeta_arr


def nll2d(double[:, ::1] logits, long[::1] targets):
    cdef Py_ssize_t n = logits.shape[0], d = logits.shape[1]
    nll_arr = np.empty(n, dtype=np.float64)
    dlogits_arr = np.empty((n, d), dtype=np.float64)
    cdef double[::1] nll = nll_arr
    cdef double[:, ::1] dlogits = dlogits_arr
    cdef Py_ssize_t i, j, t
    cdef double m, s
    with nogil:
        for i in range(n):
            t = targets[i]
            m = logits[i, 0]
            for j in range(1, d):
                if logits[i, j] > m:
                    m = logits[i, j]
            s = 0.0
            for j in range(d):
                dlogits[i, j] = exp(logits[i, j] - m)
                s += dlogits[i, j]
            nll[i] = log(s) - (logits[i, t] - m)
            for j in range(d):
                dlogits[i, j] /= s
            dlogits[i, t] -= 1.0
    return nll_arr, dlogits_arr
