import numpy as np
import pytest

from hlstm import autodiff as ad
from hlstm.numerics import finite_diff_grad, relative_error


def check_op_grad(build, inputs, eps=1e-5, tol=1e-4, seed=0):
    """Backprop a random projection of ``build(*vars)`` and compare with central differences."""
    rng = np.random.default_rng(seed)
    vars_ = [ad.param(x.copy()) for x in inputs]
    out = build(*vars_)
    proj = rng.normal(size=out.shape)
    ad.total(out * ad.Var(proj)).backward()
    for i, x in enumerate(inputs):
        def f(xi, i=i):
            args = [ad.Var(v) for v in inputs]
            args[i] = ad.Var(xi)
            return float(np.sum(build(*args).value * proj))
        numeric = finite_diff_grad(f, x.copy(), eps)
        analytic = vars_[i].grad if vars_[i].grad is not None else np.zeros_like(x)
        err = relative_error(analytic, numeric).max()
        assert err < tol, f"input {i}: relative error {err}"


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
