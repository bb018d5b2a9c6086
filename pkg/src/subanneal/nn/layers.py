"""Layers and the sequential network container.

Everything is plain numpy with hand-written backward passes. Layers cache
their forward inputs, so a backward call is only valid after a forward call
on the same batch. Double precision is the default; float32 can be selected
per network for speed.
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Layer shapes do not compose."""


class Dense:
    """Fully connected layer: y = x @ w + b."""

    def __init__(self, in_features: int, out_features: int, bias: bool = True,
                 dtype=np.float64):
        if in_features < 1 or out_features < 1:
            raise ShapeError("Dense features must be positive")
        self.in_features = in_features
        self.out_features = out_features
        self.w = np.zeros((in_features, out_features), dtype=dtype)
        self.b = np.zeros(out_features, dtype=dtype) if bias else None
        self.grad_w = None
        self.grad_b = None
        self._x = None

    def init_params(self, rng: np.random.Generator) -> None:
        # He initialization, suited to the ReLU nets built here.
        std = np.sqrt(2.0 / self.in_features)
        self.w[...] = rng.normal(0.0, std, self.w.shape)
        if self.b is not None:
            self.b[...] = 0.0

    def out_shape(self, in_shape):
        if in_shape != (self.in_features,):
            raise ShapeError(
                f"Dense expects input shape ({self.in_features},), got {in_shape}")
        return (self.out_features,)

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._x = x
        y = x @ self.w
        if self.b is not None:
            y = y + self.b
        return y

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if self._x is None:
            raise RuntimeError("backward called before forward")
        self.grad_w = self._x.T @ grad_out
        if self.b is not None:
            self.grad_b = grad_out.sum(axis=0)
        return grad_out @ self.w.T


class Conv2d:
    """2D convolution on NCHW input, direct im2col evaluation."""

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int,
                 stride: int = 1, padding: int = 0, bias: bool = True,
                 dtype=np.float64):
        if kernel_size < 1 or stride < 1 or padding < 0:
            raise ShapeError("invalid Conv2d geometry")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.stride = stride
        self.padding = padding
        self.w = np.zeros((out_channels, in_channels, kernel_size, kernel_size),
                          dtype=dtype)
        self.b = np.zeros(out_channels, dtype=dtype) if bias else None
        self.grad_w = None
        self.grad_b = None
        self._cols = None
        self._x_shape = None

    def init_params(self, rng: np.random.Generator) -> None:
        fan_in = self.in_channels * self.kernel_size * self.kernel_size
        std = np.sqrt(2.0 / fan_in)
        self.w[...] = rng.normal(0.0, std, self.w.shape)
        if self.b is not None:
            self.b[...] = 0.0

    def _out_hw(self, h: int, w: int):
        # floor mode: a ragged edge narrower than the stride is dropped
        k, s, p = self.kernel_size, self.stride, self.padding
        oh = (h + 2 * p - k) // s + 1
        ow = (w + 2 * p - k) // s + 1
        if oh < 1 or ow < 1:
            raise ShapeError(
                f"Conv2d geometry k={k} s={s} p={p} exceeds input {h}x{w}")
        return oh, ow

    def out_shape(self, in_shape):
        if len(in_shape) != 3 or in_shape[0] != self.in_channels:
            raise ShapeError(
                f"Conv2d expects input (C={self.in_channels}, H, W), got {in_shape}")
        oh, ow = self._out_hw(in_shape[1], in_shape[2])
        return (self.out_channels, oh, ow)

    def forward(self, x: np.ndarray) -> np.ndarray:
        n, c, h, w = x.shape
        k, s, p = self.kernel_size, self.stride, self.padding
        oh, ow = self._out_hw(h, w)
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
        cols = np.empty((n, c, k, k, oh, ow), dtype=x.dtype)
        for i in range(k):
            for j in range(k):
                cols[:, :, i, j] = xp[:, :, i:i + s * oh:s, j:j + s * ow:s]
        cols = cols.reshape(n, c * k * k, oh * ow)
        self._cols = cols
        self._x_shape = x.shape
        wm = self.w.reshape(self.out_channels, -1)
        y = np.matmul(wm, cols)  # (n, out_channels, oh*ow)
        y = y.reshape(n, self.out_channels, oh, ow)
        if self.b is not None:
            y = y + self.b[:, None, None]
        return y

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if self._cols is None:
            raise RuntimeError("backward called before forward")
        n, c, h, w = self._x_shape
        k, s, p = self.kernel_size, self.stride, self.padding
        _, _, oh, ow = grad_out.shape
        gm = grad_out.reshape(n, self.out_channels, oh * ow)
        self.grad_w = np.einsum("nol,nfl->of", gm, self._cols).reshape(self.w.shape)
        if self.b is not None:
            self.grad_b = grad_out.sum(axis=(0, 2, 3))
        wm = self.w.reshape(self.out_channels, -1)
        gcols = np.matmul(wm.T, gm).reshape(n, c, k, k, oh, ow)
        gxp = np.zeros((n, c, h + 2 * p, w + 2 * p), dtype=grad_out.dtype)
        for i in range(k):
            for j in range(k):
                gxp[:, :, i:i + s * oh:s, j:j + s * ow:s] += gcols[:, :, i, j]
        return gxp[:, :, p:p + h, p:p + w] if p else gxp


class ReLU:
    def __init__(self):
        self._mask = None

    def out_shape(self, in_shape):
        return in_shape

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._mask = x > 0
        return x * self._mask

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if self._mask is None:
            raise RuntimeError("backward called before forward")
        return grad_out * self._mask


class Flatten:
    def __init__(self):
        self._shape = None

    def out_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if self._shape is None:
            raise RuntimeError("backward called before forward")
        return grad_out.reshape(self._shape)


#: Layers whose weight tensor is maskable. Biases are never masked.
WEIGHT_LAYERS = (Dense, Conv2d)


class Network:
    """Ordered layer stack with reverse-mode gradients.

    ``input_shape`` is the per-example shape (no batch axis); layer
    compatibility is checked at construction so shape mismatches fail before
    any training starts.
    """

    def __init__(self, layers, input_shape):
        self.layers = list(layers)
        self.input_shape = tuple(int(d) for d in input_shape)
        shape = self.input_shape
        for layer in self.layers:
            shape = layer.out_shape(shape)
        self.output_shape = shape

    def init_params(self, rng: np.random.Generator) -> None:
        for layer in self.layers:
            if isinstance(layer, WEIGHT_LAYERS):
                layer.init_params(rng)

    def forward(self, x: np.ndarray) -> np.ndarray:
        if tuple(x.shape[1:]) != self.input_shape:
            raise ShapeError(
                f"batch shape {tuple(x.shape[1:])} != input shape {self.input_shape}")
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, grad_logits: np.ndarray) -> dict:
        """Backpropagate and return {param name: gradient}."""
        g = grad_logits
        for layer in reversed(self.layers):
            g = layer.backward(g)
        return {name: grad for name, grad in self._iter_grads()}

    def _iter_grads(self):
        for i, layer in enumerate(self.layers):
            if isinstance(layer, WEIGHT_LAYERS):
                yield f"layer{i}.w", layer.grad_w
                if layer.b is not None:
                    yield f"layer{i}.b", layer.grad_b

    def params(self) -> dict:
        """All trainable parameters by name (live arrays, not copies)."""
        out = {}
        for i, layer in enumerate(self.layers):
            if isinstance(layer, WEIGHT_LAYERS):
                out[f"layer{i}.w"] = layer.w
                if layer.b is not None:
                    out[f"layer{i}.b"] = layer.b
        return out

    def set_param(self, name: str, value: np.ndarray) -> None:
        idx, attr = name.split(".")
        layer = self.layers[int(idx.removeprefix("layer"))]
        current = getattr(layer, attr)
        if current.shape != value.shape:
            raise ShapeError(f"{name}: shape {value.shape} != {current.shape}")
        setattr(layer, attr, np.array(value, dtype=current.dtype))

    def weights(self) -> dict:
        """Maskable weight tensors by name (live arrays). Biases excluded."""
        return {
            f"layer{i}.w": layer.w
            for i, layer in enumerate(self.layers)
            if isinstance(layer, WEIGHT_LAYERS)
        }

    def weight_shapes(self) -> dict:
        return {name: w.shape for name, w in self.weights().items()}

    def num_params(self) -> int:
        return sum(int(p.size) for p in self.params().values())

    def clone(self) -> "Network":
        """Structural copy with copied parameter values and no cached state."""
        copies = []
        for layer in self.layers:
            if isinstance(layer, Dense):
                c = Dense(layer.in_features, layer.out_features,
                          bias=layer.b is not None, dtype=layer.w.dtype)
                c.w = layer.w.copy()
                if layer.b is not None:
                    c.b = layer.b.copy()
            elif isinstance(layer, Conv2d):
                c = Conv2d(layer.in_channels, layer.out_channels,
                           layer.kernel_size, layer.stride, layer.padding,
                           bias=layer.b is not None, dtype=layer.w.dtype)
                c.w = layer.w.copy()
                if layer.b is not None:
                    c.b = layer.b.copy()
            elif isinstance(layer, ReLU):
                c = ReLU()
            elif isinstance(layer, Flatten):
                c = Flatten()
            else:  # pragma: no cover - only the four layer kinds exist
                raise TypeError(f"unknown layer {type(layer).__name__}")
            copies.append(c)
        return Network(copies, self.input_shape)
