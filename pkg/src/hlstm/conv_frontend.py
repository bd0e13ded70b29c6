"""Small convolutional feature extractor and the transition layer that seeds LSTM states."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .plstm import PixelLayerState, PixelVars


@dataclass
class ConvLayer:
    weight: np.ndarray  # (out, in, k, k)
    stride: int = 1
    padding: int = 1

    @property
    def kernel_size(self):
        return self.weight.shape[-1]


@dataclass
class ConvStack:
    layers: list = field(default_factory=list)
    activation: str = "relu"  # "identity" exposes the raw (linear) cross-correlation

    @classmethod
    def init(cls, in_channels, channels, rng, kernel_size=3):
        layers = []
        fan_in = in_channels
        for out in channels:
            s = np.sqrt(6.0 / (fan_in * kernel_size ** 2))
            w = rng.uniform(-s, s, size=(out, fan_in, kernel_size, kernel_size))
            layers.append(ConvLayer(w, 1, (kernel_size - 1) // 2))
            fan_in = out
        return cls(layers)


def conv_stack_forward(x, weights, strides, paddings, activation="relu"):
    """Var-level forward; ``weights`` are Vars aligned with strides/paddings."""
    for w, s, p in zip(weights, strides, paddings):
        x = ad.conv2d(x, w, s, p)
        if activation == "relu":
            x = ad.relu(x)
        elif activation != "identity":
            raise ValueError(f"unknown activation {activation!r}")
    return x


def conv_forward(image, stack):
    image = np.asarray(image, dtype=np.float64)
    out = conv_stack_forward(ad.Var(image), [ad.Var(l.weight) for l in stack.layers],
                             [l.stride for l in stack.layers],
                             [l.padding for l in stack.layers], stack.activation)
    return out.value


def transition_forward(features, w_hidden, w_memory, n_dirs=8):
    """Var-level transition: 1x1 maps to depth hidden/memory, spatial fields copy them.

    Returns PixelVars with spatial fields (N, d, H*W) and depth fields (d, H*W).
    """
    c, h, w = features.shape
    flat = ad.reshape(features, (c, h * w))
    h_t = ad.matmul(w_hidden, flat)
    m_t = ad.matmul(w_memory, flat)
    d = h_t.shape[0]
    h_s = ad.broadcast_to(h_t, (n_dirs, d, h * w))
    m_s = ad.broadcast_to(m_t, (n_dirs, d, h * w))
    return PixelVars(h_s, h_t, m_s, m_t, (h, w))


def transition_layer(features, w_hidden, w_memory, n_dirs=8):
    features = np.asarray(features, dtype=np.float64)
    pv = transition_forward(ad.Var(features), ad.Var(w_hidden), ad.Var(w_memory), n_dirs)
    return PixelLayerState.from_vars(pv)
