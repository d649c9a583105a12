from .adam import AdamState, adam_update
from .categorical import (categorical_argmax, categorical_sample,
                          categorical_stats, log_softmax)
from .gradcheck import grad_check
from .layers import DenseLayer, init_dense, mlp_backward, mlp_forward
from .lstm import LstmParams, init_lstm, lstm_bptt, lstm_step, zero_state

__all__ = [
    "AdamState", "adam_update",
    "categorical_argmax", "categorical_sample", "categorical_stats",
    "log_softmax", "grad_check",
    "DenseLayer", "init_dense", "mlp_backward", "mlp_forward",
    "LstmParams", "init_lstm", "lstm_bptt", "lstm_step", "zero_state",
]
