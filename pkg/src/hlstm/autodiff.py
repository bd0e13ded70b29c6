"""Minimal reverse-mode differentiation over numpy arrays.

Every op returns a :class:`Var` holding its value and a closure that maps
the output gradient to gradients for each parent.  Ops that appear in hot
loops of the network (convolution, neighbour gathers, region pooling,
softmax cross-entropy) carry hand-written adjoints instead of being
composed from primitives.
"""
from __future__ import annotations

import numpy as np

DTYPE = np.float64


class Var:
    __slots__ = ("value", "grad", "parents", "backward_fn", "requires_grad", "name")

    def __init__(self, value, parents=(), backward_fn=None, requires_grad=False, name=None):
        self.value = np.asarray(value, dtype=DTYPE)
        self.parents = tuple(parents)
        self.backward_fn = backward_fn
        self.requires_grad = requires_grad or any(p.requires_grad for p in self.parents)
        self.grad = None
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        tag = f" {self.name!r}" if self.name else ""
        return f"Var{tag}(shape={self.value.shape})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_var(other)))

    def __rsub__(self, other):
        return add(as_var(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)

    def backward(self, grad=None):
        """Accumulate d(self)/d(leaf) into ``leaf.grad`` for every leaf needing it."""
        if grad is None:
            if self.value.size != 1:
                raise ValueError("backward() without a seed gradient needs a scalar output")
            grad = np.ones_like(self.value)
        order = _topological_order(self)
        grads = {id(self): np.asarray(grad, dtype=DTYPE)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if not node.parents:
                node.grad = g if node.grad is None else node.grad + g
                continue
            parent_grads = node.backward_fn(g)
            for parent, pg in zip(node.parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg


def _topological_order(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def as_var(x):
    return x if isinstance(x, Var) else Var(x)


def param(value, name=None):
    return Var(value, requires_grad=True, name=name)


def _unbroadcast(grad, shape):
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ----------------------------------------------------------------------------
# elementwise


def add(a, b):
    a, b = as_var(a), as_var(b)
    return Var(a.value + b.value, (a, b),
               lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def neg(a):
    return Var(-a.value, (a,), lambda g: (-g,))


def mul(a, b):
    a, b = as_var(a), as_var(b)
    return Var(a.value * b.value, (a, b),
               lambda g: (_unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)))


def sigmoid_array(x):
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a):
    y = sigmoid_array(a.value)
    return Var(y, (a,), lambda g: (g * y * (1.0 - y),))


def tanh(a):
    y = np.tanh(a.value)
    return Var(y, (a,), lambda g: (g * (1.0 - y * y),))


def relu(a):
    mask = a.value > 0
    return Var(np.where(mask, a.value, 0.0), (a,), lambda g: (g * mask,))


def exp(a):
    y = np.exp(a.value)
    return Var(y, (a,), lambda g: (g * y,))


def log(a):
    x = a.value
    return Var(np.log(x), (a,), lambda g: (g / x,))


# ----------------------------------------------------------------------------
# shape and reductions


def matmul(a, b):
    a, b = as_var(a), as_var(b)
    return Var(a.value @ b.value, (a, b),
               lambda g: (g @ b.value.T, a.value.T @ g))


def reshape(a, shape):
    old = a.shape
    return Var(a.value.reshape(shape), (a,), lambda g: (g.reshape(old),))


def broadcast_to(a, shape):
    old = a.shape
    return Var(np.broadcast_to(a.value, shape).copy(), (a,), lambda g: (_unbroadcast(g, old),))


def total(a):
    return Var(a.value.sum(), (a,), lambda g: (np.full(a.shape, float(g)),))


def getitem(a, key):
    def backward(g):
        out = np.zeros(a.shape)
        out[key] = g
        return (out,)
    return Var(a.value[key], (a,), backward)


def concat(parts, axis=0):
    parts = [as_var(p) for p in parts]
    sizes = [p.shape[axis] for p in parts]
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        return tuple(np.take(g, np.arange(bounds[k], bounds[k + 1]), axis=axis)
                     for k in range(len(parts)))
    return Var(np.concatenate([p.value for p in parts], axis=axis), parts, backward)


def take(a, idx, axis=-1):
    """Gather entries of ``a`` along ``axis``; repeated indices accumulate in backward."""
    idx = np.asarray(idx)
    axis = axis % a.value.ndim

    def backward(g):
        out = np.zeros(a.shape)
        moved = np.moveaxis(out, axis, 0)
        np.add.at(moved, idx, np.moveaxis(g, axis, 0))
        return (out,)
    return Var(np.take(a.value, idx, axis=axis), (a,), backward)


def segment_mean(a, segments, num_segments):
    """Mean over columns of a 2-D ``a`` grouped by ``segments``; empty groups give zero."""
    segments = np.asarray(segments)
    counts = np.bincount(segments, minlength=num_segments).astype(DTYPE)
    inv = np.divide(1.0, counts, out=np.zeros_like(counts), where=counts > 0)
    out = np.zeros((a.shape[0], num_segments))
    np.add.at(out.T, segments, a.value.T)
    out *= inv

    def backward(g):
        return ((g * inv)[:, segments],)
    return Var(out, (a,), backward)


# ----------------------------------------------------------------------------
# fused network kernels


def lse_pool(a, segments, num_segments, pi):
    """Per-segment (1/pi) log mean exp(pi * a) over the columns of 2-D ``a``.

    The per-segment maximum is subtracted before exponentiating.  It is a
    constant shift, so the adjoint (a softmax over each segment) is exact.
    """
    if pi <= 0:
        raise ValueError("pi must be positive")
    segments = np.asarray(segments)
    x = a.value
    counts = np.bincount(segments, minlength=num_segments)
    if np.any(counts == 0):
        raise ValueError("lse_pool: empty segment")
    peak = np.full((x.shape[0], num_segments), -np.inf)
    np.maximum.at(peak.T, segments, x.T)
    z = np.exp(pi * (x - peak[:, segments]))
    sums = np.zeros((x.shape[0], num_segments))
    np.add.at(sums.T, segments, z.T)
    out = peak + np.log(sums / counts) / pi

    def backward(g):
        weights = z / sums[:, segments]
        return (g[:, segments] * weights,)
    return Var(out, (a,), backward)


def softmax_cross_entropy(logits, targets, floor=1e-12):
    """Mean of -log(max(softmax(logits)[t], floor)) over columns of 2-D ``logits``."""
    targets = np.asarray(targets, dtype=np.intp)
    x = logits.value
    n = x.shape[1]
    if n == 0:
        return Var(0.0)
    if targets.min() < 0 or targets.max() >= x.shape[0]:
        raise ValueError("target class index out of range")
    shifted = x - x.max(axis=0, keepdims=True)
    e = np.exp(shifted)
    probs = e / e.sum(axis=0, keepdims=True)
    cols = np.arange(n)
    picked = probs[targets, cols]
    loss = -np.log(np.maximum(picked, floor)).mean()

    def backward(g):
        grad = probs.copy()
        grad[targets, cols] -= 1.0
        grad[:, picked <= floor] = 0.0
        return (grad * (float(g) / n),)
    return Var(loss, (logits,), backward)


def im2col(x, k, stride, pad):
    c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    oh = (h + 2 * pad - k) // stride + 1
    ow = (w + 2 * pad - k) // stride + 1
    cols = np.empty((c, k, k, oh, ow))
    for dy in range(k):
        for dx in range(k):
            cols[:, dy, dx] = xp[:, dy:dy + stride * oh:stride, dx:dx + stride * ow:stride]
    return cols.reshape(c * k * k, oh * ow), oh, ow


def col2im(cols, shape, k, stride, pad, oh, ow):
    c, h, w = shape
    xp = np.zeros((c, h + 2 * pad, w + 2 * pad))
    cols = cols.reshape(c, k, k, oh, ow)
    for dy in range(k):
        for dx in range(k):
            xp[:, dy:dy + stride * oh:stride, dx:dx + stride * ow:stride] += cols[:, dy, dx]
    return xp[:, pad:pad + h, pad:pad + w]


def conv2d(x, weight, stride=1, pad=0):
    """Zero-padded cross-correlation of a C x H x W map with F x C x k x k filters."""
    f, c, k, k2 = weight.shape
    if k != k2:
        raise ValueError("square kernels only")
    if x.shape[0] != c:
        raise ValueError(f"channel mismatch: image has {x.shape[0]}, filters expect {c}")
    cols, oh, ow = im2col(x.value, k, stride, pad)
    wmat = weight.value.reshape(f, -1)
    out = (wmat @ cols).reshape(f, oh, ow)

    def backward(g):
        g2 = g.reshape(f, -1)
        gw = (g2 @ cols.T).reshape(weight.shape)
        gx = col2im(wmat.T @ g2, x.shape, k, stride, pad, oh, ow) if x.requires_grad else None
        return gx, gw
    return Var(out, (x, weight), backward)

