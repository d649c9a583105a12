"""Central finite-difference gradient verification."""

from __future__ import annotations

import numpy as np


def grad_check(loss_fn, params, analytic_grads, h: float = 1e-5) -> float:
    """Max relative error between analytic gradients and central differences.

    ``loss_fn()`` must be a deterministic function of the arrays in
    ``params``; each parameter element is perturbed in place by +/- h.
    The relative error denominator is max(|analytic|, |numeric|, 1).
    """
    worst = 0.0
    for p, g in zip(params, analytic_grads):
        flat_p = p.reshape(-1)
        flat_g = np.asarray(g).reshape(-1)
        for i in range(flat_p.shape[0]):
            orig = flat_p[i]
            flat_p[i] = orig + h
            up = loss_fn()
            flat_p[i] = orig - h
            down = loss_fn()
            flat_p[i] = orig
            numeric = (up - down) / (2.0 * h)
            denom = max(abs(flat_g[i]), abs(numeric), 1.0)
            worst = max(worst, abs(flat_g[i] - numeric) / denom)
    return worst
