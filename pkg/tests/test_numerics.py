import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hlstm.numerics import cross_entropy, finite_diff_grad, relative_error, sigmoid, softmax


def test_sigmoid_values():
    assert sigmoid(0.0) == 0.5
    assert sigmoid(1.0) == pytest.approx(1.0 / (1.0 + math.exp(-1.0)), abs=1e-15)
    assert sigmoid(1.0) == pytest.approx(0.7310585, abs=1e-7)


@given(st.floats(-700, 700))
def test_sigmoid_symmetry(x):
    assert sigmoid(x) + sigmoid(-x) == pytest.approx(1.0, abs=1e-12)


def test_softmax_oracle():
    # independent scalar evaluation
    z = sum(math.exp(v) for v in (1, 2, 3))
    expected = [math.exp(v) / z for v in (1, 2, 3)]
    out = softmax(np.array([1.0, 2.0, 3.0]))
    np.testing.assert_allclose(out, expected, rtol=0, atol=1e-15)
    np.testing.assert_allclose(out, [0.09003, 0.24473, 0.66524], atol=5e-6)


def test_softmax_uniform_and_shift():
    np.testing.assert_allclose(softmax(np.full(3, 7.5)), np.full(3, 1 / 3), atol=1e-15)
    x = np.array([0.3, -1.2, 4.0])
    np.testing.assert_allclose(softmax(x), softmax(x + 123.0), atol=1e-15)


def test_softmax_empty():
    with pytest.raises(ValueError):
        softmax(np.array([]))


@settings(max_examples=200)
@given(arrays(np.float64, st.integers(1, 12), elements=st.floats(-50, 50)))
def test_softmax_sums_to_one(x):
    p = softmax(x)
    assert np.all(p >= 0)
    assert abs(p.sum() - 1.0) <= 1e-9


def test_cross_entropy():
    assert cross_entropy(np.array([0.0, 1.0, 0.0]), 1) == 0.0
    assert cross_entropy(np.full(3, 1 / 3), 2) == pytest.approx(math.log(3), abs=1e-12)
    assert cross_entropy(np.array([0.1, 0.9]), 0) == pytest.approx(2.302585, abs=1e-6)
    # probability floor keeps the loss finite
    assert cross_entropy(np.array([0.0, 1.0]), 0) == pytest.approx(-math.log(1e-12))
    with pytest.raises(ValueError):
        cross_entropy(np.array([0.5, 0.5]), 2)
    with pytest.raises(ValueError):
        cross_entropy(np.array([0.5, 0.5]), -1)


def test_finite_diff_scalar_examples():
    assert finite_diff_grad(lambda x: x * x, 3.0, 1e-4) == pytest.approx(6.0, abs=1e-6)
    assert finite_diff_grad(sigmoid, 0.0) == pytest.approx(0.25, abs=1e-6)


def test_finite_diff_quadratic(rng):
    A = rng.normal(size=(5, 5))
    x = rng.normal(size=5)
    g = finite_diff_grad(lambda v: float(v @ A @ v), x.copy())
    np.testing.assert_allclose(g, (A + A.T) @ x, atol=1e-5)


def test_finite_diff_restores_input(rng):
    x = rng.normal(size=(3, 2))
    before = x.copy()
    finite_diff_grad(lambda v: float(np.sum(v ** 3)), x)
    assert np.array_equal(x, before)


def test_finite_diff_nonfinite():
    with pytest.raises(FloatingPointError), np.errstate(divide="ignore", invalid="ignore"):
        finite_diff_grad(lambda v: float(np.log(v[0])), np.array([0.0]))


def test_relative_error_floor():
    assert relative_error(1e-9, 0.0) == pytest.approx(1e-3)
    assert relative_error(2.0, 1.0) == pytest.approx(0.5)
