# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled twin of echelonrl.kernels.pyref.

The win is on the per-step path: single-vector affines, the fused LSTM cell
and the fused Adam update, where numpy's per-call overhead dominates at
these sizes. Batched (2-D) inputs are delegated to numpy/BLAS, which is
already optimal for matrix-matrix work.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp as cexp
from libc.math cimport pow as cpow
from libc.math cimport sqrt as csqrt
from libc.math cimport tanh as ctanh

cnp.import_array()

NAME = "cython"


def affine(x, w, b=None):
    if x.ndim != 1:
        y = x @ w.T
        if b is not None:
            y = y + b
        return y
    return _affine_vec(np.ascontiguousarray(x), np.ascontiguousarray(w), b)


cdef _affine_vec(double[::1] x, double[:, ::1] w, b):
    cdef Py_ssize_t m = w.shape[0]
    cdef Py_ssize_t n = w.shape[1]
    out = np.empty(m, dtype=np.float64)
    cdef double[::1] y = out
    cdef double[::1] bv
    cdef Py_ssize_t i, j
    cdef double acc
    if b is None:
        for i in range(m):
            acc = 0.0
            for j in range(n):
                acc += w[i, j] * x[j]
            y[i] = acc
    else:
        bv = np.ascontiguousarray(b)
        for i in range(m):
            acc = bv[i]
            for j in range(n):
                acc += w[i, j] * x[j]
            y[i] = acc
    return out


def affine_backward(x, w, gy):
    if x.ndim != 1:
        return gy @ w, gy.T @ x, gy.sum(axis=0)
    return _affine_backward_vec(np.ascontiguousarray(x), np.ascontiguousarray(w),
                                np.ascontiguousarray(gy))


cdef _affine_backward_vec(double[::1] x, double[:, ::1] w, double[::1] gy):
    cdef Py_ssize_t m = w.shape[0]
    cdef Py_ssize_t n = w.shape[1]
    gw_arr = np.empty((m, n), dtype=np.float64)
    gx_arr = np.zeros(n, dtype=np.float64)
    cdef double[:, ::1] gw = gw_arr
    cdef double[::1] gx = gx_arr
    cdef Py_ssize_t i, j
    cdef double g
    for i in range(m):
        g = gy[i]
        for j in range(n):
            gw[i, j] = g * x[j]
            gx[j] += g * w[i, j]
    return gx_arr, gw_arr, np.asarray(gy).copy()


def tanh_forward(z):
    z = np.ascontiguousarray(z)
    out = np.empty_like(z)
    _tanh_flat(z.reshape(-1), out.reshape(-1))
    return out


cdef void _tanh_flat(double[::1] z, double[::1] out) noexcept:
    cdef Py_ssize_t i
    for i in range(z.shape[0]):
        out[i] = ctanh(z[i])


def tanh_backward(y, gy):
    y = np.ascontiguousarray(y)
    gy = np.ascontiguousarray(gy)
    out = np.empty_like(y)
    _tanh_bwd_flat(y.reshape(-1), gy.reshape(-1), out.reshape(-1))
    return out


cdef void _tanh_bwd_flat(double[::1] y, double[::1] gy, double[::1] out) noexcept:
    cdef Py_ssize_t i
    for i in range(y.shape[0]):
        out[i] = gy[i] * (1.0 - y[i] * y[i])


def sigmoid_forward(z):
    z = np.ascontiguousarray(z)
    out = np.empty_like(z)
    _sigmoid_flat(z.reshape(-1), out.reshape(-1))
    return out


cdef void _sigmoid_flat(double[::1] z, double[::1] out) noexcept:
    cdef Py_ssize_t i
    for i in range(z.shape[0]):
        out[i] = 1.0 / (1.0 + cexp(-z[i]))


def lstm_cell_forward(x, h, c, wx, wh, b):
    x = np.ascontiguousarray(x)
    h = np.ascontiguousarray(h)
    c = np.ascontiguousarray(c)
    cdef Py_ssize_t hidden = h.shape[0]
    gi = np.empty(hidden, dtype=np.float64)
    gf = np.empty(hidden, dtype=np.float64)
    gg = np.empty(hidden, dtype=np.float64)
    go = np.empty(hidden, dtype=np.float64)
    c2 = np.empty(hidden, dtype=np.float64)
    tc2 = np.empty(hidden, dtype=np.float64)
    h2 = np.empty(hidden, dtype=np.float64)
    _lstm_fwd(x, h, c, np.ascontiguousarray(wx), np.ascontiguousarray(wh),
              np.ascontiguousarray(b), gi, gf, gg, go, c2, tc2, h2)
    return h2, c2, (x, h, c, gi, gf, gg, go, tc2)


cdef void _lstm_fwd(double[::1] x, double[::1] h, double[::1] c,
                    double[:, ::1] wx, double[:, ::1] wh, double[::1] b,
                    double[::1] gi, double[::1] gf, double[::1] gg,
                    double[::1] go, double[::1] c2, double[::1] tc2,
                    double[::1] h2) noexcept:
    cdef Py_ssize_t hidden = h.shape[0]
    cdef Py_ssize_t din = x.shape[0]
    cdef Py_ssize_t k, r, j
    cdef double acc
    cdef double[4] gate
    for k in range(hidden):
        for r in range(4):
            acc = b[r * hidden + k]
            for j in range(din):
                acc += wx[r * hidden + k, j] * x[j]
            for j in range(hidden):
                acc += wh[r * hidden + k, j] * h[j]
            gate[r] = acc
        gi[k] = 1.0 / (1.0 + cexp(-gate[0]))
        gf[k] = 1.0 / (1.0 + cexp(-gate[1]))
        gg[k] = ctanh(gate[2])
        go[k] = 1.0 / (1.0 + cexp(-gate[3]))
        c2[k] = gf[k] * c[k] + gi[k] * gg[k]
        tc2[k] = ctanh(c2[k])
        h2[k] = go[k] * tc2[k]


def lstm_cell_backward(cache, wx, wh, dh2, dc2):
    x, h, c, gi, gf, gg, go, tc2 = cache
    cdef Py_ssize_t hidden = h.shape[0]
    cdef Py_ssize_t din = x.shape[0]
    da = np.empty(4 * hidden, dtype=np.float64)
    dc_prev = np.empty(hidden, dtype=np.float64)
    _lstm_bwd_gates(np.ascontiguousarray(c), gi, gf, gg, go, tc2,
                    np.ascontiguousarray(dh2), np.ascontiguousarray(dc2),
                    da, dc_prev)
    dwx = np.empty((4 * hidden, din), dtype=np.float64)
    dwh = np.empty((4 * hidden, hidden), dtype=np.float64)
    dx = np.zeros(din, dtype=np.float64)
    dh_prev = np.zeros(hidden, dtype=np.float64)
    _outer_and_matvec(da, np.ascontiguousarray(x), np.ascontiguousarray(wx), dwx, dx)
    _outer_and_matvec(da, np.ascontiguousarray(h), np.ascontiguousarray(wh), dwh, dh_prev)
    return dx, dh_prev, dc_prev, dwx, dwh, da


cdef void _lstm_bwd_gates(double[::1] c, double[::1] gi, double[::1] gf,
                          double[::1] gg, double[::1] go, double[::1] tc2,
                          double[::1] dh2, double[::1] dc2,
                          double[::1] da, double[::1] dc_prev) noexcept:
    cdef Py_ssize_t hidden = c.shape[0]
    cdef Py_ssize_t k
    cdef double dgo, dc, dgi, dgg, dgf
    for k in range(hidden):
        dgo = dh2[k] * tc2[k]
        dc = dc2[k] + dh2[k] * go[k] * (1.0 - tc2[k] * tc2[k])
        dgi = dc * gg[k]
        dgg = dc * gi[k]
        dgf = dc * c[k]
        dc_prev[k] = dc * gf[k]
        da[0 * hidden + k] = dgi * gi[k] * (1.0 - gi[k])
        da[1 * hidden + k] = dgf * gf[k] * (1.0 - gf[k])
        da[2 * hidden + k] = dgg * (1.0 - gg[k] * gg[k])
        da[3 * hidden + k] = dgo * go[k] * (1.0 - go[k])


cdef void _outer_and_matvec(double[::1] da, double[::1] vec,
                            double[:, ::1] w, double[:, ::1] dw,
                            double[::1] dvec) noexcept:
    cdef Py_ssize_t rows = dw.shape[0]
    cdef Py_ssize_t cols = dw.shape[1]
    cdef Py_ssize_t i, j
    cdef double g
    for i in range(rows):
        g = da[i]
        for j in range(cols):
            dw[i, j] = g * vec[j]
            dvec[j] += g * w[i, j]


def adam_step(param, grad, m, v, double lr, double beta1, double beta2,
              double eps, long t):
    grad = np.ascontiguousarray(grad)
    _adam_flat(param.reshape(-1), grad.reshape(-1), m.reshape(-1),
               v.reshape(-1), lr, beta1, beta2, eps, t)


cdef void _adam_flat(double[::1] p, double[::1] g, double[::1] m,
                     double[::1] v, double lr, double beta1, double beta2,
                     double eps, long t) noexcept:
    cdef Py_ssize_t i
    cdef double bc1 = 1.0 - cpow(beta1, t)
    cdef double bc2 = 1.0 - cpow(beta2, t)
    for i in range(p.shape[0]):
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i]
        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i]
        p[i] -= lr * (m[i] / bc1) / (csqrt(v[i] / bc2) + eps)
