"""Reverse-mode automatic differentiation over a fixed op set.

A tape of `Tensor` nodes wrapping float64 numpy arrays. The op set is
deliberately small: affine arithmetic, tanh/relu/sigmoid, exp/log,
reductions, elementwise min/max/clip, matmul, and a stable log-softmax.
That is everything the losses in this repo need; it is not a general
autodiff system.

All values are float64. Broadcasting follows numpy rules; gradients are
un-broadcast back to the operand shapes.
"""

from __future__ import annotations

import numpy as np


class NumericError(ValueError):
    """A computation produced a non-finite value."""


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    ndim_extra = grad.ndim - len(shape)
    if ndim_extra > 0:
        grad = grad.sum(axis=tuple(range(ndim_extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("value", "grad", "_parents", "_backward")

    def __init__(self, value, parents=(), backward=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self._parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.value.shape

    def backward(self):
        """Accumulate gradients of this scalar into the whole tape."""
        if self.value.size != 1:
            raise ValueError("backward() requires a scalar output")
        if not np.isfinite(self.value):
            raise NumericError(f"non-finite loss value: {self.value!r}")
        order = []
        seen = set()

        def visit(node):
            stack = [(node, False)]
            while stack:
                n, processed = stack.pop()
                if processed:
                    order.append(n)
                    continue
                if id(n) in seen:
                    continue
                seen.add(id(n))
                stack.append((n, True))
                for p in n._parents:
                    stack.append((p, False))

        visit(self)
        for node in order:
            node.grad = np.zeros_like(node.value)
        self.grad = np.ones_like(self.value)
        for node in reversed(order):
            if node._backward is not None:
                node._backward()

    # -- elementwise arithmetic -------------------------------------------

    def __add__(self, other):
        other = as_tensor(other)
        out = Tensor(self.value + other.value, (self, other))

        def bwd():
            self.grad += _unbroadcast(out.grad, self.shape)
            other.grad += _unbroadcast(out.grad, other.shape)

        out._backward = bwd
        return out

    __radd__ = __add__

    def __neg__(self):
        out = Tensor(-self.value, (self,))

        def bwd():
            self.grad += -out.grad

        out._backward = bwd
        return out

    def __sub__(self, other):
        return self + (-as_tensor(other))

    def __rsub__(self, other):
        return as_tensor(other) + (-self)

    def __mul__(self, other):
        other = as_tensor(other)
        out = Tensor(self.value * other.value, (self, other))

        def bwd():
            self.grad += _unbroadcast(out.grad * other.value, self.shape)
            other.grad += _unbroadcast(out.grad * self.value, other.shape)

        out._backward = bwd
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other)
        out = Tensor(self.value / other.value, (self, other))

        def bwd():
            self.grad += _unbroadcast(out.grad / other.value, self.shape)
            other.grad += _unbroadcast(
                -out.grad * self.value / other.value**2, other.shape
            )

        out._backward = bwd
        return out

    def __rtruediv__(self, other):
        return as_tensor(other) / self

    def __pow__(self, exponent: float):
        out = Tensor(self.value**exponent, (self,))

        def bwd():
            self.grad += out.grad * exponent * self.value ** (exponent - 1)

        out._backward = bwd
        return out

    # -- linear algebra ---------------------------------------------------

    def __matmul__(self, other):
        other = as_tensor(other)
        out = Tensor(self.value @ other.value, (self, other))

        def bwd():
            self.grad += out.grad @ other.value.T
            other.grad += self.value.T @ out.grad

        out._backward = bwd
        return out

    # -- reductions -------------------------------------------------------

    def sum(self, axis=None):
        out = Tensor(self.value.sum(axis=axis), (self,))

        def bwd():
            g = out.grad
            if axis is not None:
                g = np.expand_dims(g, axis)
            self.grad += np.broadcast_to(g, self.shape)

        out._backward = bwd
        return out

    def mean(self, axis=None):
        n = self.value.size if axis is None else self.value.shape[axis]
        return self.sum(axis=axis) * (1.0 / n)

    def reshape(self, *shape):
        out = Tensor(self.value.reshape(*shape), (self,))

        def bwd():
            self.grad += out.grad.reshape(self.shape)

        out._backward = bwd
        return out


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# -- nonlinearities and elementwise functions -----------------------------


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.value)
    out = Tensor(y, (x,))

    def bwd():
        x.grad += out.grad * (1.0 - y * y)

    out._backward = bwd
    return out


def relu(x: Tensor) -> Tensor:
    out = Tensor(np.maximum(x.value, 0.0), (x,))

    def bwd():
        x.grad += out.grad * (x.value > 0.0)

    out._backward = bwd
    return out


def sigmoid(x: Tensor) -> Tensor:
    # stable in both tails
    y = np.where(
        x.value >= 0.0,
        1.0 / (1.0 + np.exp(-np.abs(x.value))),
        np.exp(-np.abs(x.value)) / (1.0 + np.exp(-np.abs(x.value))),
    )
    out = Tensor(y, (x,))

    def bwd():
        x.grad += out.grad * y * (1.0 - y)

    out._backward = bwd
    return out


def log_sigmoid(x: Tensor) -> Tensor:
    # -softplus(-x), stable in both tails; unlike log(clip(sigmoid(x))) the
    # gradient (1 - sigmoid(x)) never vanishes, so saturated logits recover
    z = x.value
    y = np.where(z >= 0.0, -np.log1p(np.exp(-np.abs(z))),
                 z - np.log1p(np.exp(-np.abs(z))))
    out = Tensor(y, (x,))
    s = np.where(
        z >= 0.0,
        1.0 / (1.0 + np.exp(-np.abs(z))),
        np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))),
    )

    def bwd():
        x.grad += out.grad * (1.0 - s)

    out._backward = bwd
    return out


def exp(x: Tensor) -> Tensor:
    y = np.exp(x.value)
    out = Tensor(y, (x,))

    def bwd():
        x.grad += out.grad * y

    out._backward = bwd
    return out


def log(x: Tensor) -> Tensor:
    out = Tensor(np.log(x.value), (x,))

    def bwd():
        x.grad += out.grad / x.value

    out._backward = bwd
    return out


def minimum(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise min; gradient flows to the smaller operand (ties: a)."""
    a, b = as_tensor(a), as_tensor(b)
    take_a = a.value <= b.value
    out = Tensor(np.where(take_a, a.value, b.value), (a, b))

    def bwd():
        a.grad += _unbroadcast(out.grad * take_a, a.shape)
        b.grad += _unbroadcast(out.grad * ~take_a, b.shape)

    out._backward = bwd
    return out


def clip(x: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp to [lo, hi]; zero gradient outside the interval."""
    inside = (x.value >= lo) & (x.value <= hi)
    out = Tensor(np.clip(x.value, lo, hi), (x,))

    def bwd():
        x.grad += out.grad * inside

    out._backward = bwd
    return out


def log_softmax(x: Tensor) -> Tensor:
    """Row-wise log-softmax with max-subtraction, for 2-D logits."""
    m = x.value.max(axis=-1, keepdims=True)
    z = x.value - m
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    y = z - lse
    out = Tensor(y, (x,))

    def bwd():
        p = np.exp(y)
        x.grad += out.grad - p * out.grad.sum(axis=-1, keepdims=True)

    out._backward = bwd
    return out


def softmax_cross_entropy(logits: Tensor, onehot_targets: np.ndarray) -> Tensor:
    """Mean negative log-likelihood of the target rows under softmax(logits)."""
    lp = log_softmax(logits)
    return -(lp * onehot_targets).sum(axis=-1).mean()
