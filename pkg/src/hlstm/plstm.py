"""Pixel LSTM layers: per-pixel spatial/depth recurrence and the surface classifier."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .lstm_core import lstm_cell

# (row, col) offsets of the neighbour in each direction: N, NE, E, SE, S, SW, W, NW
DIRECTIONS = ("N", "NE", "E", "SE", "S", "SW", "W", "NW")
OFFSETS = ((-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1))


def opposite(n):
    return (n + 4) % 8


@dataclass
class PixelLayerState:
    """Hidden and memory fields of one P-LSTM layer.

    ``h_spatial[n]`` at pixel p is the hidden cell p sends toward its n-th
    neighbour; ``m_spatial[n]`` is the memory that stays at p for that
    direction.  Shapes: spatial (N, d, H, W), depth (d, H, W).
    """
    h_spatial: np.ndarray
    h_depth: np.ndarray
    m_spatial: np.ndarray
    m_depth: np.ndarray

    def __post_init__(self):
        dhw = self.h_depth.shape
        if self.m_depth.shape != dhw or self.h_spatial.shape[1:] != dhw \
                or self.m_spatial.shape != self.h_spatial.shape:
            raise ValueError("state fields disagree in (d, H, W)")

    @property
    def d(self):
        return self.h_depth.shape[0]

    @property
    def grid(self):
        return self.h_depth.shape[1:]

    def to_vars(self):
        n, d, h, w = self.h_spatial.shape
        return PixelVars(ad.Var(self.h_spatial.reshape(n, d, h * w)),
                         ad.Var(self.h_depth.reshape(d, h * w)),
                         ad.Var(self.m_spatial.reshape(n, d, h * w)),
                         ad.Var(self.m_depth.reshape(d, h * w)), (h, w))

    @classmethod
    def from_vars(cls, pv):
        h, w = pv.grid
        n, d, _ = pv.h_spatial.shape
        return cls(pv.h_spatial.value.reshape(n, d, h, w), pv.h_depth.value.reshape(d, h, w),
                   pv.m_spatial.value.reshape(n, d, h, w), pv.m_depth.value.reshape(d, h, w))


@dataclass
class PixelVars:
    """Var-level counterpart of PixelLayerState with pixels flattened to one axis."""
    h_spatial: ad.Var  # (N, d, H*W)
    h_depth: ad.Var  # (d, H*W)
    m_spatial: ad.Var
    m_depth: ad.Var
    grid: tuple


def _shift(arr, dr, dc):
    # out[..., r, c] = arr[..., r + dr, c + dc], zero outside the grid
    h, w = arr.shape[-2:]
    out = np.zeros_like(arr)
    r0, r1 = max(0, -dr), min(h, h - dr)
    c0, c1 = max(0, -dc), min(w, w - dc)
    if r0 < r1 and c0 < c1:
        out[..., r0:r1, c0:c1] = arr[..., r0 + dr:r1 + dr, c0 + dc:c1 + dc]
    return out


def neighbour_gather(h_spatial, grid):
    """Slot n at pixel j holds what j's n-th neighbour sent toward j (zeros off-grid)."""
    n_dirs, d, hw = h_spatial.shape
    h, w = grid
    src = h_spatial.value.reshape(n_dirs, d, h, w)
    out = np.empty_like(src)
    for n, (dr, dc) in enumerate(OFFSETS):
        out[n] = _shift(src[opposite(n)], dr, dc)

    def backward(g):
        g = g.reshape(n_dirs, d, h, w)
        back = np.empty_like(g)
        for n, (dr, dc) in enumerate(OFFSETS):
            back[opposite(n)] = _shift(g[n], -dr, -dc)
        return (back.reshape(n_dirs, d, hw),)
    return ad.Var(out.reshape(n_dirs, d, hw), (h_spatial,), backward)


def input_states(pv):
    """((N+1)*d, H*W) matrix whose column j is the concatenated input state of pixel j."""
    n_dirs, d, hw = pv.h_spatial.shape
    nb = neighbour_gather(pv.h_spatial, pv.grid)
    return ad.concat([ad.reshape(nb, (n_dirs * d, hw)), pv.h_depth], axis=0)


def plstm_layer(pv, w_spatial, w_depth, mode="current"):
    """One layer-synchronous P-LSTM update; every read comes from ``pv``."""
    X = input_states(pv)
    m_s, h_s = lstm_cell(X, pv.m_spatial, w_spatial, mode)
    m_t, h_t = lstm_cell(X, pv.m_depth, w_depth, mode)
    return PixelVars(h_s, h_t, m_s, m_t, pv.grid)


def gather_input_state(state, j):
    """Input state vector of pixel ``j = (row, col)`` for the next layer."""
    r, c = j
    n_dirs, d, h, w = state.h_spatial.shape
    if not (0 <= r < h and 0 <= c < w):
        raise IndexError(f"pixel {j} outside {h}x{w} grid")
    parts = []
    for n, (dr, dc) in enumerate(OFFSETS):
        rr, cc = r + dr, c + dc
        if 0 <= rr < h and 0 <= cc < w:
            parts.append(state.h_spatial[opposite(n), :, rr, cc])
        else:
            parts.append(np.zeros(d))
    parts.append(state.h_depth[:, r, c])
    return np.concatenate(parts)


def plstm_layer_forward(state, w_spatial, w_depth, mode="current"):
    out = plstm_layer(state.to_vars(), ad.Var(w_spatial), ad.Var(w_depth), mode)
    return PixelLayerState.from_vars(out)


def surface_logits(h_depth, w_label, b_label):
    """(classes, H*W) confidence maps from the final depth hidden cells."""
    return ad.matmul(w_label, h_depth) + ad.reshape(b_label, (-1, 1))


def classify_pixels(h_depth_final, w_label, b_label=None):
    """Per-pixel class distribution, shape (classes, H, W)."""
    d, h, w = h_depth_final.shape
    if b_label is None:
        b_label = np.zeros(w_label.shape[0])
    logits = surface_logits(ad.Var(h_depth_final.reshape(d, h * w)), ad.Var(w_label),
                            ad.Var(b_label)).value
    logits = logits - logits.max(axis=0, keepdims=True)
    e = np.exp(logits)
    return (e / e.sum(axis=0, keepdims=True)).reshape(-1, h, w)


def label_map(probs):
    return np.argmax(probs, axis=0).astype(np.int64)
