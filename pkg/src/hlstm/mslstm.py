"""Multi-scale superpixel LSTM: LSE region fusion, region recurrence, relation classifier."""
from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from . import autodiff as ad
from .lstm_core import lstm_cell
from .superpixel import SuperpixelMap, adjacency


class RelationLabel(IntEnum):
    layering = 0
    supporting = 1
    siding = 2
    affinity = 3


RELATIONS = tuple(r.name for r in RelationLabel)


@dataclass
class RegionGraph:
    """A superpixel map with the index arrays the MS-LSTM layer needs."""
    spmap: SuperpixelMap
    pairs: np.ndarray  # (P, 2) ordered adjacent region pairs

    @classmethod
    def build(cls, spmap):
        return cls(spmap, adjacency(spmap).ordered_pairs)

    @property
    def K(self):
        return self.spmap.K

    @property
    def segments(self):
        return self.spmap.flat

    @property
    def scale(self):
        return self.spmap.scale


@dataclass
class RelationGraphPrediction:
    scale: float
    pairs: np.ndarray  # (P, 2)
    probs: np.ndarray  # (P, 4)

    @property
    def argmax(self):
        return np.argmax(self.probs, axis=1)

    def records(self):
        return [{"scale": self.scale, "region_a": int(a), "region_b": int(b),
                 "probs": [float(p) for p in pr], "argmax": int(np.argmax(pr))}
                for (a, b), pr in zip(self.pairs, self.probs)]

    @classmethod
    def from_records(cls, records, scale=None):
        recs = [r for r in records if scale is None or r["scale"] == scale]
        if not recs:
            return cls(scale, np.zeros((0, 2), dtype=np.int64), np.zeros((0, 4)))
        return cls(recs[0]["scale"], np.array([[r["region_a"], r["region_b"]] for r in recs]),
                   np.array([r["probs"] for r in recs], dtype=np.float64))


def lse_fuse(hbar_pixels, pi=1.0):
    """Smooth max over a region: hbar_pixels is (Q, C), returns (C,)."""
    x = np.asarray(hbar_pixels, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("lse_fuse needs a nonempty (pixels, channels) array")
    return ad.lse_pool(ad.Var(x.T), np.zeros(x.shape[0], dtype=np.int64), 1, pi).value[:, 0]


def neighbour_mean(fused, rg):
    """(C, K): mean of each region's neighbours' columns; zeros for isolated regions."""
    pairs = rg.pairs
    return ad.segment_mean(ad.take(fused, pairs[:, 1], axis=1), pairs[:, 0], rg.K)


def gather_superpixel_input(graph, fused, region):
    """Input state of one region: [mean of neighbours' fused cells, own fused cells]."""
    fused = np.asarray(fused, dtype=np.float64)
    nb = graph.neighbours(region)
    mean = fused[nb].mean(axis=0) if len(nb) else np.zeros(fused.shape[1])
    return np.concatenate([mean, fused[region]])


def mslstm_layer(h_track, m_track, h_pixel_lstm, rg, w, pi=1.0, mode="current"):
    """One MS-LSTM layer on Vars.

    ``h_track``/``m_track`` are the layer's own (d, H*W) pixel fields and
    ``h_pixel_lstm`` the paired P-LSTM depth hidden cells.  Returns region
    hidden/memory (d, K) and their pixel broadcasts (d, H*W).
    """
    hbar = ad.concat([h_track, h_pixel_lstm], axis=0)
    fused = ad.lse_pool(hbar, rg.segments, rg.K, pi)
    m_region = ad.segment_mean(m_track, rg.segments, rg.K)
    H = ad.concat([neighbour_mean(fused, rg), fused], axis=0)
    m_next, h_next = lstm_cell(H, m_region, w, mode)
    return h_next, m_next, ad.take(h_next, rg.segments, axis=1), ad.take(m_next, rg.segments, axis=1)


def mslstm_layer_forward(hbar, memory, spmap, w, pi=1.0, mode="current"):
    """Plain-array layer: ``hbar`` is (2d, H, W), ``memory`` (d, H, W); returns new (h, m) fields."""
    c, h, wd = hbar.shape
    d = c // 2
    rg = RegionGraph.build(spmap)
    flat = np.asarray(hbar, dtype=np.float64).reshape(c, h * wd)
    _, _, h_pix, m_pix = mslstm_layer(ad.Var(flat[:d]), ad.Var(memory.reshape(d, -1)),
                                      ad.Var(flat[d:]), rg, ad.Var(w), pi, mode)
    return h_pix.value.reshape(d, h, wd), m_pix.value.reshape(d, h, wd)


def pair_features(h_region, pairs):
    """(3d, P): [h_a, h_b, h_a * h_b] for each ordered pair (a, b).

    The product block lets a linear read-out detect whether two regions
    agree, which no function of the form f(h_a) + g(h_b) can.
    """
    ha = ad.take(h_region, pairs[:, 0], axis=1)
    hb = ad.take(h_region, pairs[:, 1], axis=1)
    return ad.concat([ha, hb, ha * hb], axis=0)


def relation_logits(h_region, pairs, w_rel, b_rel):
    """(4, P) logits for ordered pairs."""
    return ad.matmul(w_rel, pair_features(h_region, pairs)) + ad.reshape(b_rel, (-1, 1))


def predict_relations(region_hidden, graph, w_rel, b_rel=None, scale=None):
    """``region_hidden`` is (K, d); one distribution per ordered adjacent pair."""
    h = np.asarray(region_hidden, dtype=np.float64).T
    if h.shape[1] != graph.num_nodes:
        raise ValueError(f"need hidden cells for all {graph.num_nodes} regions")
    if b_rel is None:
        b_rel = np.zeros(w_rel.shape[0])
    pairs = graph.ordered_pairs
    logits = relation_logits(ad.Var(h), pairs, ad.Var(w_rel), ad.Var(b_rel)).value
    e = np.exp(logits - logits.max(axis=0, keepdims=True))
    return RelationGraphPrediction(scale, pairs, (e / e.sum(axis=0, keepdims=True)).T)
