"""Minimal reverse-mode automatic differentiation over numpy arrays.

A :class:`Tensor` wraps an array. Operations on tensors that require
gradients record their parents and a closure mapping the output gradient
to parent gradients; :func:`backward` walks the recorded graph in reverse
topological order. Under :func:`no_grad` nothing is recorded.
"""

from __future__ import annotations

import contextlib

import numpy as np

from ..errors import ContractError

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("value", "grad", "parents", "backward_fn", "requires_grad", "name")

    def __init__(self, value, parents=(), backward_fn=None, requires_grad=False, name=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.parents = parents
        self.backward_fn = backward_fn
        self.requires_grad = requires_grad or backward_fn is not None
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape})"

    # arithmetic sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(value, name=None):
    return Tensor(value, requires_grad=True, name=name)


def record(value, parents, backward_fn):
    """Wrap an op result; ``backward_fn(g)`` returns one gradient (or None) per parent."""
    if _grad_enabled and any(p.requires_grad for p in parents):
        return Tensor(value, parents, backward_fn)
    return Tensor(value)


def _unbroadcast(grad, shape):
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# elementwise and structural ops

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return record(a.value + b.value, (a, b),
                  lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return record(a.value - b.value, (a, b),
                  lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return record(a.value * b.value, (a, b),
                  lambda g: (_unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)))


def matmul(a, b):
    """a @ b where ``b`` is 2-D and ``a`` may carry extra leading axes."""
    a, b = as_tensor(a), as_tensor(b)

    def back(g):
        flat_a = a.value.reshape(-1, a.shape[-1])
        return g @ b.value.T, flat_a.T @ g.reshape(-1, b.shape[-1])

    return record(a.value @ b.value, (a, b), back)


def linear(x, w, b):
    """x @ w + b for a 2-D ``x``."""
    return record(x.value @ w.value + b.value, (x, w, b),
                  lambda g: (g @ w.value.T, x.value.T @ g, g.sum(axis=0)))


def tanh(x):
    out = np.tanh(x.value)
    return record(out, (x,), lambda g: (g * (1.0 - out * out),))


def sigmoid(x):
    out = 1.0 / (1.0 + np.exp(-x.value))
    return record(out, (x,), lambda g: (g * out * (1.0 - out),))


def exp(x):
    out = np.exp(x.value)
    return record(out, (x,), lambda g: (g * out,))


def log(x):
    return record(np.log(x.value), (x,), lambda g: (g / x.value,))


def clamp(x, lo, hi):
    """Clip values; gradient passes only where the input was strictly inside."""
    inside = (x.value > lo) & (x.value < hi)
    return record(np.clip(x.value, lo, hi), (x,), lambda g: (g * inside,))


def total(x):
    return record(x.value.sum(), (x,), lambda g: (np.broadcast_to(g, x.shape).copy(),))


def concat(xs, axis=-1):
    xs = [as_tensor(x) for x in xs]
    sizes = [x.shape[axis] for x in xs]
    splits = np.cumsum(sizes)[:-1]
    return record(np.concatenate([x.value for x in xs], axis=axis), tuple(xs),
                  lambda g: tuple(np.split(g, splits, axis=axis)))


def stack(xs, axis=0):
    xs = [as_tensor(x) for x in xs]
    n = len(xs)

    def back(g):
        return tuple(np.take(g, i, axis=axis) for i in range(n))

    return record(np.stack([x.value for x in xs], axis=axis), tuple(xs), back)


def getitem(x, index):
    parts = index if isinstance(index, tuple) else (index,)
    fancy = any(isinstance(p, (np.ndarray, list)) for p in parts)

    def back(g):
        full = np.zeros_like(x.value)
        if fancy:
            np.add.at(full, index, g)
        else:
            full[index] = g
        return (full,)

    return record(x.value[index], (x,), back)


def embed(table, ids):
    """Rows of ``table`` selected by an integer array of any shape."""
    ids = np.asarray(ids)

    def back(g):
        full = np.zeros_like(table.value)
        np.add.at(full, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        return (full,)

    return record(table.value[ids], (table,), back)


# ---------------------------------------------------------------------------
# fused recurrent and attention ops

def gru_cell(x, h, wx, wh, bx, bh):
    """One GRU step; gates are packed as [reset | update | candidate]."""
    hid = h.shape[-1]
    gx = x.value @ wx.value + bx.value
    gh = h.value @ wh.value + bh.value
    r = 1.0 / (1.0 + np.exp(-(gx[:, :hid] + gh[:, :hid])))
    z = 1.0 / (1.0 + np.exp(-(gx[:, hid:2 * hid] + gh[:, hid:2 * hid])))
    ghn = gh[:, 2 * hid:]
    n = np.tanh(gx[:, 2 * hid:] + r * ghn)
    out = (1.0 - z) * n + z * h.value

    def back(g):
        dn = g * (1.0 - z) * (1.0 - n * n)
        dz = g * (h.value - n) * z * (1.0 - z)
        dr = dn * ghn * r * (1.0 - r)
        dgx = np.concatenate([dr, dz, dn], axis=1)
        dgh = np.concatenate([dr, dz, dn * r], axis=1)
        return (
            dgx @ wx.value.T,
            g * z + dgh @ wh.value.T,
            x.value.T @ dgx,
            h.value.T @ dgh,
            dgx.sum(axis=0),
            dgh.sum(axis=0),
        )

    return record(out, (x, h, wx, wh, bx, bh), back)


def additive_attention(query, keys, values, v, mask):
    """Context vectors from additive (tanh) attention.

    query (B, A) is the projected decoder state, keys (B, S, A) the
    projected encoder states, values (B, S, H) the encoder states, v (A,)
    the scoring vector and mask (B, S) marks real source positions.
    """
    t = np.tanh(query.value[:, None, :] + keys.value)
    scores = t @ v.value
    scores = np.where(mask, scores, -np.inf)
    scores = scores - scores.max(axis=1, keepdims=True)
    w = np.exp(scores)
    w /= w.sum(axis=1, keepdims=True)
    ctx = np.einsum("bs,bsh->bh", w, values.value)

    def back(g):
        dw = np.einsum("bh,bsh->bs", g, values.value)
        dvalues = w[:, :, None] * g[:, None, :]
        de = w * (dw - (w * dw).sum(axis=1, keepdims=True))
        dpre = de[:, :, None] * v.value * (1.0 - t * t)
        dv = np.einsum("bsa,bs->a", t, de)
        return dpre.sum(axis=1), dpre, dvalues, dv

    return record(ctx, (query, keys, values, v), back)


# ---------------------------------------------------------------------------

def backward(loss: Tensor, params=None):
    """Accumulate d(loss)/d(leaf) into ``leaf.grad`` for every reachable leaf.

    ``params`` (a mapping name -> Tensor) selects which gradients to return;
    parameters the loss does not depend on get exact zeros.
    """
    if not isinstance(loss, Tensor) or loss.value.size != 1:
        raise ContractError("backward needs a scalar Tensor")
    if loss.backward_fn is None:
        raise ContractError("loss has no recorded computation (built under no_grad or from constants)")

    if params is not None:
        for p in params.values():
            p.grad = None

    order = []
    seen = set()
    stack_ = [(loss, False)]
    while stack_:
        node, expanded = stack_.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack_.append((node, True))
        for parent in node.parents:
            if parent.requires_grad and id(parent) not in seen:
                stack_.append((parent, False))

    grads = {id(loss): np.ones_like(loss.value)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.backward_fn is None:
            node.grad = g
            continue
        for parent, pg in zip(node.parents, node.backward_fn(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg

    if params is None:
        return None
    return {name: (p.grad if p.grad is not None else np.zeros_like(p.value)) for name, p in params.items()}
