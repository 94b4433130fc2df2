"""Reverse-mode automatic differentiation over numpy arrays.

Each operation returns a new :class:`Tensor` that remembers its parents and a
closure propagating the output gradient back to them. Only tensors that
(transitively) depend on a ``requires_grad`` leaf record a graph, so
inference on plain tensors builds nothing.
"""

from __future__ import annotations

import numpy as np


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=float)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def numpy(self):
        return self.data

    def zero_grad(self):
        self.grad = None

    # graph construction -------------------------------------------------

    @staticmethod
    def _make(data, parents, backward):
        parents = tuple(p for p in parents if isinstance(p, Tensor))
        if any(p.requires_grad for p in parents):
            return Tensor(data, True, parents, backward)
        return Tensor(data)

    def _accumulate(self, g):
        if not self.requires_grad:
            return
        g = _unbroadcast(g, self.data.shape)
        self.grad = g.copy() if self.grad is None else self.grad + g

    def backward(self, grad=None):
        """Propagate gradients from this tensor to every leaf that requires them."""
        if self._backward is None:
            raise RuntimeError("backward() called on a tensor with no recorded forward computation")
        if grad is None:
            if self.data.size != 1:
                raise RuntimeError("backward() without a gradient needs a scalar output")
            grad = np.ones_like(self.data)
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        grads = {id(self): np.asarray(grad, dtype=float)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:  # leaf
                node._accumulate(g)
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                pg = _unbroadcast(pg, parent.data.shape)
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg

    # arithmetic ---------------------------------------------------------

    def __add__(self, other):
        other = _lift(other)
        return Tensor._make(self.data + other.data, (self, other), lambda g: (g, g))

    __radd__ = __add__

    def __sub__(self, other):
        other = _lift(other)
        return Tensor._make(self.data - other.data, (self, other), lambda g: (g, -g))

    def __rsub__(self, other):
        return _lift(other) - self

    def __neg__(self):
        return Tensor._make(-self.data, (self,), lambda g: (-g,))

    def __mul__(self, other):
        other = _lift(other)
        a, b = self.data, other.data
        return Tensor._make(a * b, (self, other), lambda g: (g * b, g * a))

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _lift(other)
        a, b = self.data, other.data
        return Tensor._make(a / b, (self, other), lambda g: (g / b, -g * a / (b * b)))

    def __pow__(self, exponent):
        a = self.data
        return Tensor._make(a**exponent, (self,), lambda g: (g * exponent * a ** (exponent - 1),))

    def __matmul__(self, other):
        """``(..., n) @ (n, m)``; the right operand must be 2-D."""
        a, b = self.data, other.data
        if b.ndim != 2:
            raise ValueError("right matmul operand must be 2-D")

        def back(g):
            ga = g @ b.T
            gb = a.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            return ga, gb

        return Tensor._make(a @ b, (self, other), back)

    @property
    def T(self):
        return Tensor._make(self.data.T, (self,), lambda g: (g.T,))

    # reductions and shape ----------------------------------------------

    def sum(self, axis=None, keepdims=False):
        shape = self.data.shape

        def back(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape),)

        return Tensor._make(self.data.sum(axis=axis, keepdims=keepdims), (self,), back)

    def mean(self, axis=None, keepdims=False):
        n = self.data.size if axis is None else np.prod([self.data.shape[a] for a in np.atleast_1d(axis)])
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def reshape(self, *shape):
        old = self.data.shape
        return Tensor._make(self.data.reshape(*shape), (self,), lambda g: (g.reshape(old),))

    def __getitem__(self, idx):
        shape = self.data.shape

        basic = all(isinstance(i, (slice, int, type(Ellipsis))) for i in (idx if isinstance(idx, tuple) else (idx,)))

        def back(g):
            out = np.zeros(shape)
            if basic:
                out[idx] += g
            else:
                np.add.at(out, idx, g)
            return (out,)

        return Tensor._make(self.data[idx], (self,), back)

    # elementwise nonlinearities ----------------------------------------

    def relu(self):
        mask = self.data > 0
        return Tensor._make(self.data * mask, (self,), lambda g: (g * mask,))

    def sigmoid(self):
        s = _sigmoid(self.data)
        return Tensor._make(s, (self,), lambda g: (g * s * (1.0 - s),))

    def tanh(self):
        t = np.tanh(self.data)
        return Tensor._make(t, (self,), lambda g: (g * (1.0 - t * t),))

    def exp(self):
        e = np.exp(self.data)
        return Tensor._make(e, (self,), lambda g: (g * e,))


def _sigmoid(x):
    # numerically stable for large |x|
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def _lift(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g, shape):
    g = np.asarray(g)
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def concat(tensors, axis=0):
    tensors = [_lift(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def back(g):
        return tuple(
            np.take(g, np.arange(lo, hi), axis=axis) for lo, hi in zip(bounds[:-1], bounds[1:])
        )

    return Tensor._make(np.concatenate([t.data for t in tensors], axis=axis), tensors, back)


def pad_left(x, n, axis=1):
    """Prepend ``n`` zeros along ``axis``."""
    if n == 0:
        return x
    shape = list(x.shape)
    shape[axis] = n
    return concat([Tensor(np.zeros(shape)), x], axis=axis)
