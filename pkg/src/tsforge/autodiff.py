"""Minimal reverse-mode automatic differentiation over float64 numpy arrays.

Every operation records vector-Jacobian callbacks on its output node;
``backward`` walks the graph once in reverse topological order. Only nodes
reachable from a parameter (``requires_grad=True``) carry gradient state, and
the whole graph-building machinery can be switched off with ``no_grad`` for
cheap inference and finite-difference probes.

Matrix multiplication is deliberately restricted to 2-D operands; callers
reshape batched tensors, which keeps the backward rules obvious and correct.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np
from scipy.special import digamma, expit, gammaln

_grad_enabled = True


@contextmanager
def no_grad():
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjps")

    def __init__(self, data, requires_grad=False, parents=(), vjps=()):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._vjps = vjps

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def backward(self):
        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in visited:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            g = node.grad
            for p, vjp in zip(node._parents, node._vjps):
                if not p.requires_grad:
                    continue
                contrib = vjp(g)
                if p.grad is None:
                    p.grad = np.zeros_like(p.data)
                p.grad += contrib

    # operator sugar -------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return take(self, key)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Reduce a broadcast gradient back to the original operand shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _make(data, parents, vjps) -> Tensor:
    if not _grad_enabled:
        return Tensor(data)
    parents = tuple(parents)
    if not any(p.requires_grad for p in parents):
        return Tensor(data)
    return Tensor(data, requires_grad=True, parents=parents, vjps=tuple(vjps))


# elementwise arithmetic ----------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(
        a.data + b.data,
        (a, b),
        (lambda g: _unbroadcast(g, a.data.shape), lambda g: _unbroadcast(g, b.data.shape)),
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(
        a.data - b.data,
        (a, b),
        (lambda g: _unbroadcast(g, a.data.shape), lambda g: _unbroadcast(-g, b.data.shape)),
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(
        a.data * b.data,
        (a, b),
        (
            lambda g: _unbroadcast(g * b.data, a.data.shape),
            lambda g: _unbroadcast(g * a.data, b.data.shape),
        ),
    )


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _make(
        a.data / b.data,
        (a, b),
        (
            lambda g: _unbroadcast(g / b.data, a.data.shape),
            lambda g: _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape),
        ),
    )


def powc(a, exponent: float) -> Tensor:
    a = as_tensor(a)
    return _make(
        a.data ** exponent,
        (a,),
        (lambda g: g * exponent * a.data ** (exponent - 1.0),),
    )


def square(a) -> Tensor:
    a = as_tensor(a)
    return _make(a.data * a.data, (a,), (lambda g: g * 2.0 * a.data,))


def absolute(a) -> Tensor:
    a = as_tensor(a)
    return _make(np.abs(a.data), (a,), (lambda g: g * np.sign(a.data),))


def maximum(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    pick_a = a.data >= b.data
    return _make(
        np.maximum(a.data, b.data),
        (a, b),
        (
            lambda g: _unbroadcast(g * pick_a, a.data.shape),
            lambda g: _unbroadcast(g * ~pick_a, b.data.shape),
        ),
    )


# transcendental -------------------------------------------------------------

def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _make(out, (a,), (lambda g: g * out,))


def log(a) -> Tensor:
    a = as_tensor(a)
    return _make(np.log(a.data), (a,), (lambda g: g / a.data,))


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out = np.sqrt(a.data)
    return _make(out, (a,), (lambda g: g * 0.5 / out,))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _make(out, (a,), (lambda g: g * (1.0 - out * out),))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = expit(a.data)
    return _make(out, (a,), (lambda g: g * out * (1.0 - out),))


def softplus(a) -> Tensor:
    a = as_tensor(a)
    out = np.logaddexp(0.0, a.data)
    return _make(out, (a,), (lambda g: g * expit(a.data),))


def log_gamma(a) -> Tensor:
    a = as_tensor(a)
    return _make(gammaln(a.data), (a,), (lambda g: g * digamma(a.data),))


# linear algebra / structure --------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    assert a.data.ndim == 2 and b.data.ndim == 2, "matmul is 2-D only; reshape first"
    return _make(
        a.data @ b.data,
        (a, b),
        (lambda g: g @ b.data.T, lambda g: a.data.T @ g),
    )


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    old = a.data.shape
    return _make(a.data.reshape(shape), (a,), (lambda g: g.reshape(old),))


def take(a, key) -> Tensor:
    a = as_tensor(a)

    def vjp(g):
        out = np.zeros_like(a.data)
        np.add.at(out, key, g)
        return out

    return _make(a.data[key], (a,), (vjp,))


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def make_vjp(i):
        def vjp(g):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(offsets[i], offsets[i + 1])
            return g[tuple(sl)]

        return vjp

    return _make(
        np.concatenate([t.data for t in tensors], axis=axis),
        tensors,
        [make_vjp(i) for i in range(len(tensors))],
    )


def stack(tensors, axis: int = 0) -> Tensor:
    expanded = [reshape(t, t.data.shape[:axis] + (1,) + t.data.shape[axis:]) for t in tensors]
    return concat(expanded, axis=axis)


def pad_left(a, width: int, axis: int) -> Tensor:
    """Zero-pad ``width`` entries at the start of ``axis``."""
    a = as_tensor(a)
    pad_widths = [(0, 0)] * a.data.ndim
    pad_widths[axis] = (width, 0)

    def vjp(g):
        sl = [slice(None)] * g.ndim
        sl[axis] = slice(width, None)
        return g[tuple(sl)]

    return _make(np.pad(a.data, pad_widths), (a,), (vjp,))


# reductions -----------------------------------------------------------------

def tsum(a, axis=None) -> Tensor:
    a = as_tensor(a)
    shape = a.data.shape

    def vjp(g):
        if axis is None:
            return np.broadcast_to(g, shape).copy()
        g_exp = np.expand_dims(g, axis)
        return np.broadcast_to(g_exp, shape).copy()

    return _make(a.data.sum(axis=axis), (a,), (vjp,))


def tmean(a, axis=None) -> Tensor:
    a = as_tensor(a)
    if axis is None:
        n = a.data.size
    else:
        n = a.data.shape[axis]
    return mul(tsum(a, axis=axis), 1.0 / n)
