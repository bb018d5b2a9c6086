"""Model zoo: the MLP and the small strided conv net."""

from __future__ import annotations

import numpy as np

from .nn.layers import Conv2d, Dense, Flatten, Network, ReLU


def build_mlp(input_shape, num_classes: int, hidden=(300, 100),
              dtype=np.float64) -> Network:
    """Flatten -> Dense/ReLU stack -> Dense logits."""
    in_features = int(np.prod(input_shape))
    layers = [Flatten()]
    prev = in_features
    for width in hidden:
        layers.append(Dense(prev, width, dtype=dtype))
        layers.append(ReLU())
        prev = width
    layers.append(Dense(prev, num_classes, dtype=dtype))
    return Network(layers, input_shape)


def build_small_conv(input_shape, num_classes: int, dtype=np.float64) -> Network:
    """Two strided 3x3 conv blocks then a linear head; LeNet-scale."""
    c, h, w = input_shape
    layers = [
        Conv2d(c, 8, 3, stride=2, padding=1, dtype=dtype),
        ReLU(),
        Conv2d(8, 16, 3, stride=2, padding=1, dtype=dtype),
        ReLU(),
        Flatten(),
    ]
    oh, ow = (h + 1) // 2, (w + 1) // 2
    oh, ow = (oh + 1) // 2, (ow + 1) // 2
    layers.append(Dense(16 * oh * ow, num_classes, dtype=dtype))
    return Network(layers, input_shape)


def build_model(name: str, input_shape, num_classes: int,
                rng: np.random.Generator, dtype=np.float64,
                hidden=(300, 100)) -> Network:
    if name == "mlp":
        net = build_mlp(input_shape, num_classes, hidden=hidden, dtype=dtype)
    elif name == "smallconv":
        if len(input_shape) != 3:
            raise ValueError("smallconv needs (C, H, W) inputs")
        net = build_small_conv(input_shape, num_classes, dtype=dtype)
    else:
        raise ValueError(f"unknown model {name!r}")
    net.init_params(rng)
    return net
