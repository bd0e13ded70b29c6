"""The gated LSTM transition shared by the pixel and superpixel layers."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad

# packing order of the gate blocks inside the concatenated weight matrix
GATES = ("u", "f", "v", "o")


@dataclass
class GateWeights:
    Wu: np.ndarray
    Wf: np.ndarray
    Wv: np.ndarray
    Wo: np.ndarray

    def __post_init__(self):
        shapes = {w.shape for w in (self.Wu, self.Wf, self.Wv, self.Wo)}
        if len(shapes) != 1:
            raise ValueError(f"gate matrices disagree in shape: {sorted(shapes)}")

    @property
    def d(self):
        return self.Wu.shape[0]

    @property
    def input_dim(self):
        return self.Wu.shape[1]

    def pack(self):
        return np.concatenate([self.Wu, self.Wf, self.Wv, self.Wo], axis=0)

    @classmethod
    def unpack(cls, W):
        W = np.asarray(W, dtype=np.float64)
        if W.shape[0] % 4:
            raise ValueError("packed weight rows must be a multiple of 4")
        d = W.shape[0] // 4
        return cls(*(W[k * d:(k + 1) * d].copy() for k in range(4)))

    @classmethod
    def init(cls, d, input_dim, rng):
        s = 1.0 / np.sqrt(input_dim)
        return cls.unpack(rng.uniform(-s, s, size=(4 * d, input_dim)))


@dataclass
class LSTMState:
    h: np.ndarray
    m: np.ndarray


def init_packed(d, input_dim, rng):
    return GateWeights.init(d, input_dim, rng).pack()


def lstm_cell(H, m, W, mode="current"):
    """Differentiable transition on Vars.

    ``H`` is (input_dim, M) with one column per unit, ``W`` the packed
    (4d, input_dim) matrix, ``m`` is (d, M) or carries extra leading axes
    (e.g. one memory per direction) that broadcast against the gates.
    Returns ``(m_next, h_next)``.
    """
    d = W.shape[0] // 4
    if W.shape[1] != H.shape[0]:
        raise ValueError(f"weights expect input width {W.shape[1]}, got {H.shape[0]}")
    if m.shape[-2:] != (d, H.shape[1]):
        raise ValueError(f"memory shape {m.shape} does not match (d={d}, M={H.shape[1]})")
    pre = ad.matmul(W, H)
    g_u = ad.sigmoid(pre[0:d])
    g_f = ad.sigmoid(pre[d:2 * d])
    g_v = ad.tanh(pre[2 * d:3 * d])
    g_o = ad.sigmoid(pre[3 * d:4 * d])
    m_next = g_f * m + g_u * g_v
    if mode == "current":
        h_next = ad.tanh(g_o * m_next)
    elif mode == "previous":
        h_next = ad.tanh(g_o * m)
    else:
        raise ValueError(f"unknown hidden_from_memory mode {mode!r}")
    return m_next, h_next


def lstm_step(H, m, W, mode="current"):
    """Plain-array transition for one unit: returns ``(m_next, h_next)``."""
    packed = W.pack() if isinstance(W, GateWeights) else np.asarray(W, dtype=np.float64)
    H = np.asarray(H, dtype=np.float64).reshape(-1, 1)
    m = np.asarray(m, dtype=np.float64).reshape(-1, 1)
    m_next, h_next = lstm_cell(ad.Var(H), ad.Var(m), ad.Var(packed), mode)
    return m_next.value[:, 0], h_next.value[:, 0]
