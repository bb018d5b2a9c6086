"""The shared training loop: masked batches, schedules, and evaluation.

One epoch shuffles the training set from a dedicated shuffle stream, then for
every mini-batch draws/looks up the subnetwork mask, runs the forward and
backward passes with masked weights, zeroes the gradients of masked-off
parameters, and applies one optimizer step to the *unmasked* stored weights.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

from .masks import MaskSet, apply_mask, masked_grad
from .nn.layers import Network
from .nn.losses import cross_entropy_softmax
from .nn.schedules import OneCycle, lr_at

EVAL_CHUNK = 4096  # fixed so evaluation stays bit-reproducible


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, message: str, record: dict | None = None):
        super().__init__(message)
        self.record = record or {}


@contextmanager
def masked_weights(net: Network, mask: MaskSet | None):
    """Temporarily replace each weight tensor with its Hadamard-masked copy."""
    if mask is None:
        yield
        return
    originals = {}
    weight_layers = [(name, net.layers[int(name.split(".")[0].removeprefix("layer"))])
                     for name in net.weights()]
    for name, layer in weight_layers:
        originals[name] = layer.w
        layer.w = apply_mask(layer.w, mask[name])
    try:
        yield
    finally:
        for name, layer in weight_layers:
            layer.w = originals[name]


def schedule_lr(schedule, epoch: int, step: int) -> float:
    """OneCycle advances per optimizer step, everything else per epoch."""
    if isinstance(schedule, OneCycle):
        return lr_at(schedule, step)
    return lr_at(schedule, epoch)


def run_epoch(net: Network, x: np.ndarray, y: np.ndarray, optimizer, schedule,
              epoch: int, step0: int, batch_size: int,
              rng_shuffle: np.random.Generator,
              controller=None, rng_mask: np.random.Generator | None = None):
    """Train one epoch. Returns (mean batch loss, steps taken, first lr)."""
    n = len(y)
    order = rng_shuffle.permutation(n)
    step = step0
    losses = []
    first_lr = None
    for start in range(0, n, batch_size):
        batch = order[start:start + batch_size]
        xb, yb = x[batch], y[batch]
        mask = controller.batch_mask(rng_mask) if controller is not None else None
        with masked_weights(net, mask):
            logits = net.forward(xb)
            loss, grad_logits = cross_entropy_softmax(logits, yb)
            grads = net.backward(grad_logits)
        if not np.isfinite(loss):
            raise DivergenceError(
                f"non-finite loss at epoch {epoch}, step {step}",
                record={"epoch": epoch, "step": step, "loss": loss})
        if mask is not None:
            for name in mask:
                grads[name] = masked_grad(grads[name], mask[name])
        lr = schedule_lr(schedule, epoch, step)
        if first_lr is None:
            first_lr = lr
        optimizer.step(net.params(), grads, lr=lr)
        losses.append(loss)
        step += 1
    return float(np.mean(losses)), step - step0, first_lr


def predict_logits(net: Network, x: np.ndarray, mask: MaskSet | None = None,
                   weight_scale: dict | None = None) -> np.ndarray:
    """Deterministic forward pass in fixed-size chunks.

    ``weight_scale`` multiplies weights elementwise (used for expected-mask
    evaluation, where the scale is the probability matrix).
    """
    scale_mask = None
    if weight_scale is not None:
        scale_mask = weight_scale
    out = []
    for start in range(0, len(x), EVAL_CHUNK):
        xb = x[start:start + EVAL_CHUNK]
        if scale_mask is not None:
            with _scaled_weights(net, scale_mask):
                out.append(net.forward(xb))
        else:
            with masked_weights(net, mask):
                out.append(net.forward(xb))
    return np.concatenate(out, axis=0)


@contextmanager
def _scaled_weights(net: Network, scale: dict):
    originals = {}
    weight_layers = [(name, net.layers[int(name.split(".")[0].removeprefix("layer"))])
                     for name in net.weights()]
    for name, layer in weight_layers:
        originals[name] = layer.w
        layer.w = layer.w * scale[name]
    try:
        yield
    finally:
        for name, layer in weight_layers:
            layer.w = originals[name]


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def finalize(net: Network, terminal: MaskSet) -> None:
    """Burn the terminal mask into the stored weights (permanent zeros)."""
    for name, w in net.weights().items():
        w *= terminal[name]
