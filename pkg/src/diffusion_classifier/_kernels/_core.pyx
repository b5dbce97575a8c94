# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernels for the Monte Carlo scoring inner loops.

Semantics match _fallback.py; see there for the formulas.
"""

import numpy as np

from libc.math cimport sqrt, fabs

LOSS_SQUARED_L2 = 0
LOSS_L1 = 1
LOSS_HUBER = 2


cdef inline double _loss_term(double r, int kind) nogil:
    if kind == 0:
        return r * r
    if kind == 1:
        return fabs(r)
    # huber: squared below 1, absolute above
    if fabs(r) < 1.0:
        return r * r
    return fabs(r)


def forward_noise_batch(const double[::1] x, const double[:, ::1] eps,
                        const double[::1] alpha_bar):
    cdef Py_ssize_t n = eps.shape[0]
    cdef Py_ssize_t d = eps.shape[1]
    if x.shape[0] != d or alpha_bar.shape[0] != n:
        raise ValueError("mismatched kernel argument shapes")
    out = np.empty((n, d), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef Py_ssize_t i, j
    cdef double s_ab, s_om
    with nogil:
        for i in range(n):
            s_ab = sqrt(alpha_bar[i])
            s_om = sqrt(1.0 - alpha_bar[i])
            for j in range(d):
                o[i, j] = s_ab * x[j] + s_om * eps[i, j]
    return out


def loss_points(const double[:, ::1] eps, const double[:, ::1] eps_hat, int kind):
    cdef Py_ssize_t n = eps.shape[0]
    cdef Py_ssize_t d = eps.shape[1]
    if eps_hat.shape[0] != n or eps_hat.shape[1] != d:
        raise ValueError("mismatched kernel argument shapes")
    if kind < 0 or kind > 2:
        raise ValueError(f"unknown loss code {kind}")
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t i, j
    cdef double acc
    with nogil:
        for i in range(n):
            acc = 0.0
            for j in range(d):
                acc += _loss_term(eps[i, j] - eps_hat[i, j], kind)
            o[i] = acc / d
    return out


def diag_gauss_loss_points(const double[::1] x, const double[::1] mu,
                           const double[::1] var, const double[::1] alpha_bar,
                           const double[:, ::1] eps, int kind):
    cdef Py_ssize_t n = eps.shape[0]
    cdef Py_ssize_t d = eps.shape[1]
    if x.shape[0] != d or mu.shape[0] != d or var.shape[0] != d \
            or alpha_bar.shape[0] != n:
        raise ValueError("mismatched kernel argument shapes")
    if kind < 0 or kind > 2:
        raise ValueError(f"unknown loss code {kind}")
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t i, j
    cdef double ab, om, s_ab, s_om, xt, eps_hat, acc
    with nogil:
        for i in range(n):
            ab = alpha_bar[i]
            om = 1.0 - ab
            s_ab = sqrt(ab)
            s_om = sqrt(om)
            acc = 0.0
            for j in range(d):
                xt = s_ab * x[j] + s_om * eps[i, j]
                eps_hat = s_om * (xt - s_ab * mu[j]) / (ab * var[j] + om)
                acc += _loss_term(eps[i, j] - eps_hat, kind)
            o[i] = acc / d
    return out
