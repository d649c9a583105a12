"""Bias-corrected Adam over a flat list of parameter arrays."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import kernels as K


@dataclass
class AdamState:
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params, learning_rate, **kw) -> "AdamState":
        state = cls(learning_rate=learning_rate, **kw)
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
        return state


def adam_update(params, grads, state: AdamState):
    """One optimizer step, in place on the parameter arrays."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params/grads/moments misaligned")
    state.t += 1
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} != param shape {p.shape}")
        K.adam_step(p, g, m, v, state.learning_rate,
                    state.beta1, state.beta2, state.eps, state.t)
    return params, state
