"""Scalar/array nonlinearities, softmax, cross-entropy and the finite-difference oracle."""
from __future__ import annotations

import numpy as np

from .autodiff import sigmoid_array

PROB_FLOOR = 1e-12


def sigmoid(x):
    """Logistic function 1 / (1 + e^-x); scalars in, scalars out."""
    arr = np.asarray(x, dtype=np.float64)
    out = sigmoid_array(np.atleast_1d(arr)).reshape(arr.shape)
    return float(out) if out.ndim == 0 else out


def softmax(logits, axis=0):
    logits = np.asarray(logits, dtype=np.float64)
    if logits.size == 0:
        raise ValueError("softmax of an empty vector")
    shifted = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def cross_entropy(probs, target):
    probs = np.asarray(probs, dtype=np.float64)
    if not 0 <= target < probs.shape[0]:
        raise ValueError(f"target {target} outside [0, {probs.shape[0]})")
    return float(-np.log(max(probs[target], PROB_FLOOR)))


def finite_diff_grad(f, x, eps=1e-5):
    """Central-difference gradient of scalar ``f`` at ``x``.

    ``x`` is perturbed in place one coordinate at a time and restored, so
    ``f`` may close over the same array (e.g. a model parameter).
    """
    scalar_input = np.ndim(x) == 0
    arr = np.array(x, dtype=np.float64, ndmin=1) if scalar_input else x
    if scalar_input:
        g = finite_diff_grad(lambda a: f(a[0]), arr, eps)
        return float(g[0])
    grad = np.zeros(arr.shape)
    flat = arr.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = f(arr)
        flat[i] = orig - eps
        fm = f(arr)
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise FloatingPointError(f"non-finite function value at coordinate {i}")
        gflat[i] = (fp - fm) / (2.0 * eps)
    return grad


def relative_error(analytic, numeric, floor=1e-6):
    """Elementwise |a - n| / max(|a|, |n|, floor)."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
