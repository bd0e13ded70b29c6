"""The hierarchical network: conv frontend, transition, P-LSTM stack, MS-LSTM stack, heads."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .config import ModelConfig
from .conv_frontend import ConvStack, conv_stack_forward, transition_forward
from .lstm_core import init_packed
from .mslstm import mslstm_layer, relation_logits
from .plstm import plstm_layer, surface_logits

# parameter groups; the CNN group trains at lr_cnn, all others at lr_lstm
GROUPS = ("cnn", "transition", "plstm", "mslstm")


def init_params(config, rng=None):
    rng = np.random.default_rng(config.seed) if rng is None else rng
    d, n = config.d, config.N
    params = {}
    stack = ConvStack.init(config.in_channels, config.conv_channels, rng)
    for i, layer in enumerate(stack.layers):
        params[f"conv{i}.w"] = layer.weight
    feat = config.conv_channels[-1] if config.conv_channels else config.in_channels
    s = 1.0 / np.sqrt(feat)
    params["transition.wh"] = rng.uniform(-s, s, (d, feat))
    params["transition.wm"] = rng.uniform(-s, s, (d, feat))
    for i in range(config.num_plstm_layers):
        params[f"plstm{i}.ws"] = init_packed(d, (n + 1) * d, rng)
        params[f"plstm{i}.wt"] = init_packed(d, (n + 1) * d, rng)
    s = 1.0 / np.sqrt(d)
    params["label.w"] = rng.uniform(-s, s, (config.num_classes, d))
    params["label.b"] = np.zeros(config.num_classes)
    for i in range(config.num_mslstm_layers):
        params[f"mslstm{i}.w"] = init_packed(d, 4 * d, rng)
        s = 1.0 / np.sqrt(3 * d)
        params[f"relation{i}.w"] = rng.uniform(-s, s, (config.num_relations, 3 * d))
        params[f"relation{i}.b"] = np.zeros(config.num_relations)
    return params


def param_group(name):
    head = name.split(".")[0].rstrip("0123456789")
    return {"conv": "cnn", "transition": "transition", "plstm": "plstm", "label": "plstm",
            "mslstm": "mslstm", "relation": "mslstm"}[head]


def expected_shapes(config):
    return {k: v.shape for k, v in init_params(config, np.random.default_rng(0)).items()}


@dataclass
class ForwardResult:
    surface_logits: ad.Var  # (classes, H*W)
    relation_logits: list  # per MS-LSTM layer, (4, P)
    region_hidden: list  # per MS-LSTM layer, (d, K)
    grid: tuple

    def surface_probs(self):
        x = self.surface_logits.value
        e = np.exp(x - x.max(axis=0, keepdims=True))
        return (e / e.sum(axis=0, keepdims=True)).reshape(-1, *self.grid)

    def relation_probs(self):
        out = []
        for lg in self.relation_logits:
            x = lg.value
            e = np.exp(x - x.max(axis=0, keepdims=True))
            out.append((e / e.sum(axis=0, keepdims=True)).T)
        return out


class HLSTM:
    def __init__(self, config: ModelConfig, params=None):
        self.config = config
        self.params = init_params(config) if params is None else params
        shapes = expected_shapes(config)
        if set(shapes) != set(self.params):
            raise ValueError("parameter names do not match the configuration")
        for k, shape in shapes.items():
            if self.params[k].shape != shape:
                raise ValueError(f"parameter {k}: shape {self.params[k].shape}, config expects {shape}")

    def forward(self, image, graphs, relations=True, variables=None):
        """Run the network; ``graphs`` holds one RegionGraph per MS-LSTM layer.

        ``variables`` maps parameter names to Vars (pass ``self.make_vars()``
        to differentiate); by default parameters enter as constants.
        """
        cfg = self.config
        v = variables if variables is not None else {k: ad.Var(p) for k, p in self.params.items()}
        x = ad.Var(np.asarray(image, dtype=np.float64))
        n_conv = len(cfg.conv_channels)
        feats = conv_stack_forward(x, [v[f"conv{i}.w"] for i in range(n_conv)],
                                   [1] * n_conv, [1] * n_conv)
        pv = transition_forward(feats, v["transition.wh"], v["transition.wm"], cfg.N)
        h_track, m_track = pv.h_depth, pv.m_depth
        rel_logits, region_hidden = [], []
        n_ms = cfg.num_mslstm_layers if relations else 0
        for i in range(cfg.num_plstm_layers):
            pv = plstm_layer(pv, v[f"plstm{i}.ws"], v[f"plstm{i}.wt"], cfg.hidden_from_memory)
            if i < n_ms:
                rg = graphs[i]
                h_reg, _, h_track, m_track = mslstm_layer(
                    h_track, m_track, pv.h_depth, rg, v[f"mslstm{i}.w"], cfg.pi_smooth,
                    cfg.hidden_from_memory)
                region_hidden.append(h_reg)
                rel_logits.append(relation_logits(h_reg, rg.pairs, v[f"relation{i}.w"],
                                                  v[f"relation{i}.b"]))
        logits = surface_logits(pv.h_depth, v["label.w"], v["label.b"])
        return ForwardResult(logits, rel_logits, region_hidden, pv.grid)

    def make_vars(self):
        return {k: ad.param(p, name=k) for k, p in self.params.items()}

    def example_loss(self, example, variables=None, joint=None):
        """Surface cross-entropy plus (if joint) the relation loss summed over layers."""
        joint = self.config.joint if joint is None else joint
        out = self.forward(example.image, example.graphs, relations=joint, variables=variables)
        loss = ad.softmax_cross_entropy(out.surface_logits, example.surface_gt.reshape(-1))
        if joint:
            for lg, target in zip(out.relation_logits, example.relation_targets()):
                loss = loss + ad.softmax_cross_entropy(lg, target)
        return loss, out

    def loss_and_grads(self, examples, joint=None):
        """Mean loss over ``examples`` and its gradient for every parameter."""
        if not examples:
            raise ValueError("empty batch")
        grads = {k: np.zeros_like(p) for k, p in self.params.items()}
        total = 0.0
        for ex in examples:
            variables = self.make_vars()
            loss, _ = self.example_loss(ex, variables, joint)
            loss.backward()
            total += float(loss.value)
            for k, var in variables.items():
                if var.grad is not None:
                    grads[k] += var.grad
        u = len(examples)
        for k in grads:
            grads[k] /= u
        return total / u, grads

    def predict(self, image, graphs, relations=True):
        return self.forward(image, graphs, relations=relations)
