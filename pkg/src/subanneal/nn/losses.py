"""Softmax cross entropy, the classification loss used everywhere here."""

import numpy as np


def cross_entropy_softmax(logits: np.ndarray, labels: np.ndarray):
    """Mean cross entropy of softmax(logits) against integer labels.

    Returns ``(loss, grad_logits)`` where the gradient is with respect to the
    logits and already includes the 1/batch factor, so each gradient row sums
    to zero.
    """
    labels = np.asarray(labels)
    n, k = logits.shape
    if labels.shape != (n,):
        raise ValueError(f"labels shape {labels.shape} != ({n},)")
    if labels.min() < 0 or labels.max() >= k:
        raise ValueError(f"labels must lie in [0, {k})")
    m = logits.max(axis=1, keepdims=True)
    z = logits - m
    lse = m[:, 0] + np.log(np.exp(z).sum(axis=1))
    loss = float(np.mean(lse - logits[np.arange(n), labels]))
    probs = np.exp(logits - lse[:, None])
    grad = probs
    grad[np.arange(n), labels] -= 1.0
    grad /= n
    return loss, grad
