"""Dense layers and MLP forward/backward on top of the kernel backend.

Float64 throughout; shapes are validated so mismatches fail at the call
site instead of deep inside a kernel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import kernels as K

ACTIVATIONS = ("tanh", "identity")


@dataclass
class DenseLayer:
    weights: np.ndarray  # (out, in)
    bias: np.ndarray     # (out,)
    activation: str = "tanh"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise ValueError("inconsistent dense layer shapes")


def init_dense(rng: np.random.Generator, n_out: int, n_in: int,
               activation: str = "tanh") -> DenseLayer:
    """Scaled-uniform fan-in init, biases zero."""
    limit = 1.0 / np.sqrt(n_in)
    w = rng.uniform(-limit, limit, size=(n_out, n_in))
    return DenseLayer(w, np.zeros(n_out), activation)


def dense_forward(layer: DenseLayer, x: np.ndarray):
    """Returns (y, y) for tanh, (y, None) for identity; second item is the
    post-activation value the backward pass needs."""
    if x.shape[-1] != layer.weights.shape[1]:
        raise ValueError(
            f"input width {x.shape[-1]} != layer fan-in {layer.weights.shape[1]}")
    z = K.affine(x, layer.weights, layer.bias)
    if layer.activation == "tanh":
        y = K.tanh_forward(z)
        return y, y
    return z, None


def dense_backward(layer: DenseLayer, x: np.ndarray, y_post, gy: np.ndarray):
    """Gradients (gx, gw, gb) for one layer given the forward input and the
    cached post-activation output."""
    if layer.activation == "tanh":
        gy = K.tanh_backward(y_post, gy)
    return K.affine_backward(x, layer.weights, gy)


def mlp_forward(layers, x: np.ndarray):
    """Composed dense forward; returns (output, cache) where the cache is a
    list of (input, post_activation) per layer."""
    cache = []
    for layer in layers:
        y, post = dense_forward(layer, x)
        cache.append((x, post))
        x = y
    return x, cache


def mlp_backward(layers, cache, gy: np.ndarray):
    """Exact gradients through a cached forward.

    Returns (grads, gx): grads is a list of (gw, gb) aligned with layers,
    gx the gradient w.r.t. the original input.
    """
    if len(cache) != len(layers):
        raise ValueError("cache does not match layer stack")
    grads = [None] * len(layers)
    for i in range(len(layers) - 1, -1, -1):
        x, post = cache[i]
        gy, gw, gb = dense_backward(layers[i], x, post, gy)
        grads[i] = (gw, gb)
    return grads, gy
