"""Numerically stable categorical heads: sampling, log-probabilities,
entropy, and the logit gradients the policy losses need."""

from __future__ import annotations

import numpy as np


def log_softmax(logits: np.ndarray) -> np.ndarray:
    """Stable log-softmax along the last axis (max subtraction)."""
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def categorical_sample(logits: np.ndarray, rng: np.random.Generator):
    """Sample an index from softmax(logits); returns (index, log_probability)."""
    logp = log_softmax(logits)
    cdf = np.cumsum(np.exp(logp))
    u = rng.random()
    idx = int(np.searchsorted(cdf, u, side="right"))
    idx = min(idx, logits.shape[0] - 1)
    return idx, float(logp[idx])


def categorical_stats(logits: np.ndarray, index: int):
    """(log_probability of index, distribution entropy)."""
    logp = log_softmax(logits)
    p = np.exp(logp)
    entropy = -float(np.sum(p * logp))
    return float(logp[index]), entropy


def categorical_argmax(logits: np.ndarray) -> int:
    """Deterministic mode; ties resolve to the lowest index."""
    return int(np.argmax(logits))


def batch_logp_entropy(logits: np.ndarray, indices: np.ndarray):
    """Per-row selected log-probability and entropy for a (batch, n) head.

    Also returns the softmax probabilities, reused by the gradient helpers.
    """
    logp = log_softmax(logits)
    p = np.exp(logp)
    rows = np.arange(logits.shape[0])
    selected = logp[rows, indices]
    entropy = -(p * logp).sum(axis=1)
    return selected, entropy, p, logp


def grad_selected_logp(p: np.ndarray, indices: np.ndarray,
                       coeff: np.ndarray) -> np.ndarray:
    """d(coeff . logp[selected])/dlogits = coeff * (onehot - p), per row."""
    g = -p * coeff[:, None]
    rows = np.arange(p.shape[0])
    g[rows, indices] += coeff
    return g


def grad_entropy(p: np.ndarray, logp: np.ndarray,
                 coeff: np.ndarray) -> np.ndarray:
    """d(coeff . entropy)/dlogits = -coeff * p * (logp + H), per row."""
    entropy = -(p * logp).sum(axis=1, keepdims=True)
    return -coeff[:, None] * p * (logp + entropy)
