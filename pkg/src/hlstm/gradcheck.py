"""Finite-difference check of the full joint objective against the analytic gradient."""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .config import desk_preset
from .dataio import SceneSpec, WallSegment, build_example, render_scene
from .model import HLSTM
from .numerics import finite_diff_grad, relative_error

TOLERANCE = 1e-4


def gradcheck_config(d=2, seed=0, **overrides):
    base = dict(d=d, num_plstm_layers=2, num_mslstm_layers=2, scales=[4, 8],
                conv_channels=[4, 4], seed=seed)
    base.update(overrides)
    return desk_preset(**base)


def gradcheck_example(size=4, seed=0, scales=(4, 8)):
    """A small noisy scene with sky, one wall and ground, so every relation path is exercised."""
    spec = SceneSpec(size, size, ground_fraction=0.25,
                     walls=[WallSegment(0, max(1, size // 2), 0.5, (0.9, 0.1, 0.1))],
                     ground_color=(0.2, 0.2, 0.9), noise_sigma=0.05, seed=seed)
    image, labels = render_scene(spec)
    return build_example(image, labels, scales)


@dataclass
class GradcheckReport:
    max_error: dict  # parameter name -> max relative error
    worst: tuple  # (name, flat index, analytic, numeric)
    seconds: float

    @property
    def overall(self):
        return max(self.max_error.values())

    def passed(self, tol=TOLERANCE):
        return self.overall < tol


def run_gradcheck(d=2, size=4, seed=0, eps=1e-5, config=None, example=None):
    """Compare backprop with central differences for every parameter of the joint loss."""
    t0 = time.perf_counter()
    cfg = config or gradcheck_config(d, seed)
    ex = example or gradcheck_example(size, seed, tuple(cfg.scales))
    model = HLSTM(cfg)
    # perturb the zero-initialised biases so their gradients are generic
    rng = np.random.default_rng(seed + 100)
    for k in model.params:
        if k.endswith(".b"):
            model.params[k] = rng.normal(0, 0.1, model.params[k].shape)
    _, grads = model.loss_and_grads([ex])

    def loss_value(_):
        return float(model.example_loss(ex)[0].value)

    max_error, worst, worst_err = {}, None, -1.0
    for name in sorted(model.params):
        numeric = finite_diff_grad(loss_value, model.params[name], eps)
        err = relative_error(grads[name], numeric)
        i = int(np.argmax(err))
        max_error[name] = float(err.flat[i])
        if err.flat[i] > worst_err:
            worst_err = err.flat[i]
            worst = (name, i, float(grads[name].flat[i]), float(numeric.flat[i]))
    return GradcheckReport(max_error, worst, time.perf_counter() - t0)
