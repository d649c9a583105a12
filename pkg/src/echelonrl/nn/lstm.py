"""Single LSTM cell with backpropagation through time.

Gate order in the stacked parameter rows is i, f, g, o (input, forget,
cell candidate, output). Hidden and cell state are plain float64 vectors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import kernels as K


@dataclass
class LstmParams:
    wx: np.ndarray    # (4*hidden, input)
    wh: np.ndarray    # (4*hidden, hidden)
    bias: np.ndarray  # (4*hidden,)

    @property
    def hidden_size(self) -> int:
        return self.wh.shape[1]

    @property
    def input_size(self) -> int:
        return self.wx.shape[1]


def init_lstm(rng: np.random.Generator, hidden: int, n_in: int) -> LstmParams:
    limit = 1.0 / np.sqrt(n_in)
    wx = rng.uniform(-limit, limit, size=(4 * hidden, n_in))
    limit = 1.0 / np.sqrt(hidden)
    wh = rng.uniform(-limit, limit, size=(4 * hidden, hidden))
    return LstmParams(wx, wh, np.zeros(4 * hidden))


def zero_state(hidden: int):
    return np.zeros(hidden), np.zeros(hidden)


def lstm_step(params: LstmParams, x, h, c):
    """One cell step; returns (h', c', cache) with the cache consumed by
    lstm_bptt."""
    if x.shape[0] != params.input_size or h.shape[0] != params.hidden_size:
        raise ValueError("lstm input/state width mismatch")
    return K.lstm_cell_forward(x, h, c, params.wx, params.wh, params.bias)


def lstm_bptt(params: LstmParams, caches, dh_per_step, episode_starts=None):
    """Exact gradients through a sequence of cached steps.

    ``dh_per_step[t]`` is the upstream gradient w.r.t. the hidden output of
    step t. A True entry in ``episode_starts`` marks a step whose incoming
    state was zeroed, so no gradient flows across it to the previous step.
    The initial state is treated as detached (its gradient is discarded).

    Returns (dwx, dwh, dbias, dx_per_step).
    """
    n = len(caches)
    dwx = np.zeros_like(params.wx)
    dwh = np.zeros_like(params.wh)
    dbias = np.zeros_like(params.bias)
    dxs = [None] * n
    dh_carry = np.zeros(params.hidden_size)
    dc_carry = np.zeros(params.hidden_size)
    for t in range(n - 1, -1, -1):
        dh = dh_per_step[t] + dh_carry
        dx, dh_prev, dc_prev, gwx, gwh, gb = K.lstm_cell_backward(
            caches[t], params.wx, params.wh, dh, dc_carry)
        dwx += gwx
        dwh += gwh
        dbias += gb
        dxs[t] = dx
        if episode_starts is not None and episode_starts[t]:
            dh_carry = np.zeros(params.hidden_size)
            dc_carry = np.zeros(params.hidden_size)
        else:
            dh_carry = dh_prev
            dc_carry = dc_prev
    return dwx, dwh, dbias, dxs
