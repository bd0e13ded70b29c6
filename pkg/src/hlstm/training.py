"""Joint objective, momentum SGD, the training loop, evaluation and checkpoints."""
from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ConfigError, ModelConfig
from .metrics import mean_accuracy, pixel_accuracy, relation_accuracy, relation_average_precision
from .model import GROUPS, HLSTM, expected_shapes, param_group
from .numerics import cross_entropy

log = logging.getLogger(__name__)


def surface_loss(pred, gt):
    """Mean pixel cross-entropy; ``pred`` is (classes, H, W) probabilities."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt)
    if pred.shape[1:] != gt.shape:
        raise ValueError(f"prediction grid {pred.shape[1:]} vs ground truth {gt.shape}")
    if gt.max() >= pred.shape[0]:
        raise ValueError(f"label {gt.max()} >= number of classes {pred.shape[0]}")
    flat = pred.reshape(pred.shape[0], -1)
    return float(np.mean([cross_entropy(flat[:, j], t) for j, t in enumerate(gt.ravel())]))


def relation_loss(preds, gt):
    """Sum over layers of the mean pair cross-entropy.

    ``preds`` is a list of RelationGraphPrediction, ``gt`` a matching list
    of {(a, b): label} dicts.
    """
    total = 0.0
    for pred, labels in zip(preds, gt):
        if len(pred.pairs) == 0:
            continue
        losses = []
        for (a, b), probs in zip(pred.pairs, pred.probs):
            key = (int(a), int(b))
            if key not in labels:
                raise ValueError(f"missing relation ground truth for pair {key}")
            losses.append(cross_entropy(probs, int(labels[key])))
        total += float(np.mean(losses))
    return total


def total_loss(per_example):
    """(1/U) sum of (surface + relation) losses; takes (surface, relation) tuples."""
    per_example = list(per_example)
    if not per_example:
        raise ValueError("empty batch")
    return sum(s + r for s, r in per_example) / len(per_example)


def batch_loss(model, examples, joint=None):
    """The joint objective evaluated by the differentiable network."""
    if not examples:
        raise ValueError("empty batch")
    return sum(float(model.example_loss(ex, joint=joint)[0].value) for ex in examples) / len(examples)


def sgd_step(params, grads, velocity, lr_lstm, lr_cnn, momentum=0.9, groups=None):
    """Momentum SGD: v <- momentum * v + g; p <- p - lr * v.

    ``lr_cnn`` applies to parameters in the "cnn" group, ``lr_lstm`` to
    everything else.  Returns new (params, velocity) dicts.
    """
    new_p, new_v = {}, {}
    for k, p in params.items():
        g = np.asarray(grads[k], dtype=np.float64)
        if g.shape != np.shape(p):
            raise ValueError(f"gradient for {k} has shape {g.shape}, parameter {np.shape(p)}")
        group = groups[k] if groups else param_group(k)
        lr = lr_cnn if group == "cnn" else lr_lstm
        v = momentum * velocity.get(k, 0.0) + g
        new_v[k] = v
        new_p[k] = p - lr * v
    return new_p, new_v


@dataclass
class TrainLog:
    step_losses: list = field(default_factory=list)
    epoch_losses: list = field(default_factory=list)

    def to_json(self):
        return json.dumps({"step_losses": self.step_losses, "epoch_losses": self.epoch_losses})


def train(model, examples, epochs=1, max_steps=None, callback=None):
    """Train ``model`` in place; mini-batches are drawn from a seeded permutation.

    ``callback(epoch, history)`` runs after every epoch; a truthy return stops training.
    """
    cfg = model.config
    rng = np.random.default_rng(cfg.seed + 1)
    velocity = {}
    history = TrainLog()
    n = len(examples)
    bs = cfg.batch_size or n
    step = 0
    for epoch in range(epochs):
        scale = cfg.lr_decay_factor ** (epoch // cfg.lr_decay_every) if cfg.lr_decay_every else 1.0
        order = rng.permutation(n) if bs < n else np.arange(n)
        epoch_loss = 0.0
        for start in range(0, n, bs):
            batch = [examples[i] for i in order[start:start + bs]]
            loss, grads = model.loss_and_grads(batch)
            model.params, velocity = sgd_step(model.params, grads, velocity, cfg.lr_lstm * scale,
                                              cfg.lr_cnn * scale, cfg.momentum)
            history.step_losses.append(loss)
            epoch_loss += loss * len(batch)
            step += 1
            if max_steps is not None and step >= max_steps:
                history.epoch_losses.append(epoch_loss / max(1, start + len(batch)))
                return history
        history.epoch_losses.append(epoch_loss / n)
        log.debug("epoch %d loss %.6f", epoch, history.epoch_losses[-1])
        if callback is not None and callback(epoch, history):
            break
    return history


# ----------------------------------------------------------------------------
# evaluation


@dataclass
class Predictions:
    labels: list  # H x W label maps
    relation_probs: list  # per example: list over layers of (P, 4)


def predict(model, examples, relations=True):
    labels, rels = [], []
    for ex in examples:
        out = model.forward(ex.image, ex.graphs, relations=relations)
        labels.append(np.argmax(out.surface_probs(), axis=0))
        rels.append(out.relation_probs())
    return Predictions(labels, rels)


def evaluate(model, examples, predictions=None):
    """Pixel/mean accuracy over the pooled pixels and per-layer relation AP/accuracy."""
    preds = predictions or predict(model, examples)
    pred_px = np.concatenate([p.ravel() for p in preds.labels])
    gt_px = np.concatenate([ex.surface_gt.ravel() for ex in examples])
    result = {"pixel_accuracy": pixel_accuracy(pred_px, gt_px),
              "mean_accuracy": mean_accuracy(pred_px, gt_px),
              "relation_ap": [], "relation_accuracy": []}
    n_layers = len(preds.relation_probs[0]) if preds.relation_probs else 0
    for layer in range(n_layers):
        scores = np.concatenate([r[layer] for r in preds.relation_probs])
        gt = np.concatenate([ex.relation_targets()[layer] for ex in examples])
        result["relation_ap"].append(relation_average_precision(scores, gt))
        result["relation_accuracy"].append(relation_accuracy(scores, gt))
    return result


# ----------------------------------------------------------------------------
# checkpoints

MAGIC = b"HLSTMCKP"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, model):
    cfg = model.config.to_json().encode("utf-8")
    parts = [MAGIC, struct.pack("<II", VERSION, len(cfg)), cfg,
             struct.pack("<I", len(model.params))]
    for name in sorted(model.params):
        arr = np.ascontiguousarray(model.params[name], dtype="<f8")
        key = name.encode("utf-8")
        parts.append(struct.pack("<H", len(key)) + key + struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(arr.tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_checkpoint(path, config=None):
    """Load a model; with ``config`` given, tensors are validated against it instead."""
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint")
    version, n_cfg = struct.unpack_from("<II", raw, 8)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    pos = 16
    try:
        stored = ModelConfig.from_json(raw[pos:pos + n_cfg].decode("utf-8"))
    except ConfigError as exc:
        raise CheckpointError(f"{path}: bad embedded config: {exc}") from exc
    pos += n_cfg
    (count,) = struct.unpack_from("<I", raw, pos)
    pos += 4
    params = {}
    for _ in range(count):
        (klen,) = struct.unpack_from("<H", raw, pos)
        pos += 2
        name = raw[pos:pos + klen].decode("utf-8")
        pos += klen
        (ndim,) = struct.unpack_from("<B", raw, pos)
        pos += 1
        shape = struct.unpack_from(f"<{ndim}Q", raw, pos)
        pos += 8 * ndim
        size = int(np.prod(shape)) if ndim else 1
        params[name] = np.frombuffer(raw, dtype="<f8", count=size, offset=pos).reshape(shape).copy()
        pos += 8 * size
    cfg = config or stored
    shapes = expected_shapes(cfg)
    if set(shapes) != set(params):
        raise CheckpointError(f"{path}: parameter names do not match the configuration")
    for k, shape in shapes.items():
        if params[k].shape != shape:
            raise CheckpointError(f"{path}: {k} has shape {params[k].shape}, config expects {shape}")
    return HLSTM(cfg, params)


__all__ = ["GROUPS", "surface_loss", "relation_loss", "total_loss", "batch_loss", "sgd_step",
           "train", "predict", "evaluate", "save_checkpoint", "load_checkpoint", "TrainLog",
           "CheckpointError"]
