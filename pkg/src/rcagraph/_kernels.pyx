# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: skip-gram negative sampling and Pegasos SGD.

Mirrors _kernels_py update-for-update; see that module for the contract.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log1p, sqrt

cnp.import_array()


cdef inline double _softplus(double x) nogil:
    if x > 0.0:
        return x + log1p(exp(-x))
    return log1p(exp(x))


cdef inline double _dot(double[:, ::1] m, Py_ssize_t row, double[::1] v,
                        Py_ssize_t dim) nogil:
    cdef double s = 0.0
    cdef Py_ssize_t k
    for k in range(dim):
        s += m[row, k] * v[k]
    return s


def sgns_epoch(double[:, ::1] vec_in, double[:, ::1] vec_out,
               int[::1] centers, int[::1] contexts, int[:, ::1] negatives,
               double lr):
    cdef Py_ssize_t n_pairs = centers.shape[0]
    cdef Py_ssize_t n_neg = negatives.shape[1]
    cdef Py_ssize_t dim = vec_in.shape[1]
    cdef double total = 0.0
    cdef double[::1] v_buf = np.empty(dim)
    cdef double[::1] acc = np.empty(dim)
    cdef double f, sig, g
    cdef Py_ssize_t p, k, j, c, t

    with nogil:
        for p in range(n_pairs):
            c = centers[p]
            for k in range(dim):
                v_buf[k] = vec_in[c, k]
                acc[k] = 0.0
            t = contexts[p]
            f = _dot(vec_out, t, v_buf, dim)
            sig = 1.0 / (1.0 + exp(-f))
            total += _softplus(-f)
            g = (1.0 - sig) * lr
            for k in range(dim):
                acc[k] += g * vec_out[t, k]
                vec_out[t, k] += g * v_buf[k]
            for j in range(n_neg):
                t = negatives[p, j]
                f = _dot(vec_out, t, v_buf, dim)
                sig = 1.0 / (1.0 + exp(-f))
                total += _softplus(f)
                g = -sig * lr
                for k in range(dim):
                    acc[k] += g * vec_out[t, k]
                    vec_out[t, k] += g * v_buf[k]
            for k in range(dim):
                vec_in[c, k] += acc[k]
    return total


def pegasos_train(double[:, ::1] X, double[::1] y, int[::1] order,
                  double lam, Py_ssize_t n_epochs,
                  double[::1] w, double[::1] losses):
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t d = X.shape[1]
    cdef double radius = 1.0 / sqrt(lam)
    cdef Py_ssize_t t = 0
    cdef Py_ssize_t epoch, step, i, k
    cdef double eta, margin, norm, scale, hinge_sum, m

    with nogil:
        for epoch in range(n_epochs):
            for step in range(n):
                t += 1
                i = order[t - 1]
                eta = 1.0 / (lam * t)
                margin = 0.0
                for k in range(d):
                    margin += X[i, k] * w[k]
                margin *= y[i]
                scale = 1.0 - 1.0 / t
                for k in range(d):
                    w[k] *= scale
                if margin < 1.0:
                    for k in range(d):
                        w[k] += (eta * y[i]) * X[i, k]
                norm = 0.0
                for k in range(d):
                    norm += w[k] * w[k]
                norm = sqrt(norm)
                if norm > radius:
                    scale = radius / norm
                    for k in range(d):
                        w[k] *= scale
            hinge_sum = 0.0
            for i in range(n):
                m = 0.0
                for k in range(d):
                    m += X[i, k] * w[k]
                m = 1.0 - y[i] * m
                if m > 0.0:
                    hinge_sum += m
            norm = 0.0
            for k in range(d):
                norm += w[k] * w[k]
            losses[epoch] = 0.5 * lam * norm + hinge_sum / n
