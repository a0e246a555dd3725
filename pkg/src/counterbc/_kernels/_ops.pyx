# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled dense-network kernels: batched forward/backward and Adam.

Mirrors ``python_ops``; loops are ordered so every inner loop runs over a
contiguous row, which gcc vectorizes. Accumulation order is fixed, so results
are deterministic for this backend (they may differ from the numpy backend in
the last few ulps because BLAS sums in a different order).
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()


cdef void _affine(const double[:, ::1] a, const double[:, ::1] w, const double[::1] b,
                  double[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t n = a.shape[0], din = a.shape[1], dout = w.shape[0]
    cdef Py_ssize_t i, j, k
    cdef double acc
    for i in range(n):
        for j in range(dout):
            acc = b[j]
            for k in range(din):
                acc += a[i, k] * w[j, k]
            out[i, j] = acc


cdef void _relu_inplace(double[:, ::1] z, cnp.uint8_t[:, ::1] mask) noexcept nogil:
    cdef Py_ssize_t i, j
    for i in range(z.shape[0]):
        for j in range(z.shape[1]):
            if z[i, j] > 0.0:
                mask[i, j] = 1
            else:
                mask[i, j] = 0
                z[i, j] = 0.0


cdef void _param_grads(const double[:, ::1] gz, const double[:, ::1] a,
                       double[:, ::1] gw, double[::1] gb) noexcept nogil:
    cdef Py_ssize_t n = gz.shape[0], dout = gz.shape[1], din = a.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double g
    for i in range(n):
        for j in range(dout):
            g = gz[i, j]
            gb[j] += g
            for k in range(din):
                gw[j, k] += g * a[i, k]


cdef void _input_grads(const double[:, ::1] gz, const double[:, ::1] w,
                       const cnp.uint8_t[:, ::1] mask, double[:, ::1] ga) noexcept nogil:
    cdef Py_ssize_t n = gz.shape[0], dout = gz.shape[1], din = w.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double g
    for i in range(n):
        for j in range(dout):
            g = gz[i, j]
            for k in range(din):
                ga[i, k] += g * w[j, k]
        for k in range(din):
            if mask[i, k] == 0:
                ga[i, k] = 0.0


def forward_cached(list weights, list biases, x):
    cdef Py_ssize_t n_layers = len(weights)
    cdef Py_ssize_t i
    a = np.ascontiguousarray(x, dtype=np.float64)
    acts = [a]
    masks = []
    for i in range(n_layers):
        w = weights[i]
        z = np.empty((a.shape[0], w.shape[0]), dtype=np.float64)
        _affine(a, w, biases[i], z)
        if i < n_layers - 1:
            mask = np.empty_like(z, dtype=np.uint8)
            _relu_inplace(z, mask)
            a = z
            masks.append(mask)
            acts.append(a)
        else:
            return z, acts, masks
    raise AssertionError("network with zero layers")


def backward_from_cache(list weights, list acts, list masks, gout):
    cdef Py_ssize_t n_layers = len(weights)
    cdef Py_ssize_t i
    gz = np.ascontiguousarray(gout, dtype=np.float64)
    gws = [None] * n_layers
    gbs = [None] * n_layers
    for i in range(n_layers - 1, -1, -1):
        w = weights[i]
        gw = np.zeros_like(w)
        gb = np.zeros(w.shape[0], dtype=np.float64)
        _param_grads(gz, acts[i], gw, gb)
        gws[i] = gw
        gbs[i] = gb
        if i > 0:
            ga = np.zeros_like(acts[i])
            _input_grads(gz, w, masks[i - 1], ga)
            gz = ga
    return gws, gbs


def adam_update(const double[::1] p, const double[::1] g, const double[::1] m, const double[::1] v,
                long t, double alpha, double beta1, double beta2, double eps):
    cdef Py_ssize_t n = p.shape[0]
    cdef Py_ssize_t i
    p2 = np.empty(n, dtype=np.float64)
    m2 = np.empty(n, dtype=np.float64)
    v2 = np.empty(n, dtype=np.float64)
    cdef double[::1] pv = p2, mv = m2, vv = v2
    cdef double bc1 = 1.0 - beta1**t
    cdef double bc2 = 1.0 - beta2**t
    cdef double m_hat, v_hat
    for i in range(n):
        mv[i] = beta1 * m[i] + (1.0 - beta1) * g[i]
        vv[i] = beta2 * v[i] + (1.0 - beta2) * (g[i] * g[i])
        m_hat = mv[i] / bc1
        v_hat = vv[i] / bc2
        pv[i] = p[i] - alpha * m_hat / (sqrt(v_hat) + eps)
    return p2, m2, v2
