"""Reference numpy implementation of the hot numeric kernels.

Same call signatures as the compiled twin in ``_cyops``; the active backend
is chosen in ``echelonrl.kernels``. Everything is float64.
"""

import numpy as np

NAME = "python"


def affine(x, w, b=None):
    """y = x @ w.T (+ b); x is (n,) or (batch, n), w is (m, n), b is (m,)."""
    y = x @ w.T
    if b is not None:
        y = y + b
    return y


def affine_backward(x, w, gy):
    """Gradients of y = x @ w.T + b given upstream gy (shaped like y)."""
    if x.ndim == 1:
        gw = np.outer(gy, x)
        gb = gy.copy()
    else:
        gw = gy.T @ x
        gb = gy.sum(axis=0)
    gx = gy @ w
    return gx, gw, gb


def tanh_forward(z):
    return np.tanh(z)


def tanh_backward(y, gy):
    """dz given the forward output y = tanh(z)."""
    return gy * (1.0 - y * y)


def sigmoid_forward(z):
    return 1.0 / (1.0 + np.exp(-z))


def lstm_cell_forward(x, h, c, wx, wh, b):
    """One LSTM step on vectors; gate order i, f, g, o in the stacked rows.

    Returns (h2, c2, cache) where cache holds what the backward needs.
    """
    hidden = h.shape[0]
    a = wx @ x + wh @ h + b
    ai, af, ag, ao = (a[k * hidden:(k + 1) * hidden] for k in range(4))
    gi = sigmoid_forward(ai)
    gf = sigmoid_forward(af)
    gg = np.tanh(ag)
    go = sigmoid_forward(ao)
    c2 = gf * c + gi * gg
    tc2 = np.tanh(c2)
    h2 = go * tc2
    cache = (x, h, c, gi, gf, gg, go, tc2)
    return h2, c2, cache


def lstm_cell_backward(cache, wx, wh, dh2, dc2):
    """Backward of one LSTM step.

    Returns (dx, dh_prev, dc_prev, dwx, dwh, db) for upstream gradients
    dh2 (w.r.t. the emitted hidden state) and dc2 (w.r.t. the cell state).
    """
    x, h, c, gi, gf, gg, go, tc2 = cache
    dgo = dh2 * tc2
    dc = dc2 + dh2 * go * (1.0 - tc2 * tc2)
    dgi = dc * gg
    dgg = dc * gi
    dgf = dc * c
    dc_prev = dc * gf
    da = np.concatenate([
        dgi * gi * (1.0 - gi),
        dgf * gf * (1.0 - gf),
        dgg * (1.0 - gg * gg),
        dgo * go * (1.0 - go),
    ])
    dwx = np.outer(da, x)
    dwh = np.outer(da, h)
    dx = wx.T @ da
    dh_prev = wh.T @ da
    return dx, dh_prev, dc_prev, dwx, dwh, da


def adam_step(param, grad, m, v, lr, beta1, beta2, eps, t):
    """In-place bias-corrected Adam update on one parameter array."""
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    mhat = m / (1.0 - beta1 ** t)
    vhat = v / (1.0 - beta2 ** t)
    param -= lr * mhat / (np.sqrt(vhat) + eps)
