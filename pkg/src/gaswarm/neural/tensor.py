"""Reverse-mode autodiff on float64 numpy arrays.

A ``Tensor`` records the op that produced it. ``backward`` walks the graph in
reverse topological order and accumulates ``grad`` on every tensor that
requires it. Only the ops the station networks need are provided.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class ShapeMismatch(ValueError):
    pass


class NonFiniteValue(FloatingPointError):
    pass


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False,
                 parents: Sequence["Tensor"] = (), backward: Callable | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents = tuple(parents)
        self._backward = backward

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self, grad: np.ndarray | None = None) -> None:
        if grad is None:
            if self.data.size != 1:
                raise ShapeMismatch("backward without a seed needs a scalar")
            grad = np.ones_like(self.data)
        order, seen = [], set()

        def visit(t):
            stack = [(t, False)]
            while stack:
                node, done = stack.pop()
                if done:
                    order.append(node)
                    continue
                if id(node) in seen:
                    continue
                seen.add(id(node))
                stack.append((node, True))
                stack.extend((p, False) for p in node._parents if p.requires_grad)

        visit(self)
        grads = {id(self): np.asarray(grad, dtype=np.float64)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                k = id(parent)
                grads[k] = pg if k not in grads else grads[k] + pg

    # arithmetic sugar
    def __add__(self, other):
        return add(self, _wrap(other))

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, scale(_wrap(other), -1.0))

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, _wrap(other))

    __rmul__ = __mul__


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward) -> Tensor:
    req = any(p.requires_grad for p in parents)
    return Tensor(data, req, parents if req else (), backward if req else None)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def check_finite(t: Tensor, where: str) -> Tensor:
    if not np.all(np.isfinite(t.data)):
        raise NonFiniteValue(f"non-finite value at {where}")
    return t


# -- elementwise ----------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    return _make(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def scale(a: Tensor, c: float) -> Tensor:
    return _make(a.data * c, (a,), lambda g: (g * c,))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _make(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def softplus(x: Tensor, beta: float = 1.0) -> Tensor:
    """(1/beta) log(1 + exp(beta x)), evaluated without overflow."""
    bx = beta * x.data
    y = np.logaddexp(0.0, bx) / beta
    sig = 0.5 * (1.0 + np.tanh(0.5 * bx))
    return _make(y, (x,), lambda g: (g * sig,))


def softmax(x: Tensor, temperature: float = 1.0, axis: int = 1) -> Tensor:
    """exp(T x_i) / sum_j exp(T x_j) along ``axis``; larger T sharpens the output."""
    z = temperature * x.data
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def back(g):
        return (temperature * y * (g - (g * y).sum(axis=axis, keepdims=True)),)
    return _make(y, (x,), back)


def absolute(x: Tensor) -> Tensor:
    s = np.sign(x.data)
    return _make(np.abs(x.data), (x,), lambda g: (g * s,))


# -- reductions and reshaping ----------------------------------------------

def mean(x: Tensor, axis=None) -> Tensor:
    n = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    y = x.data.mean(axis=axis)

    def back(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape) / n,)
    return _make(y, (x,), back)


def reshape(x: Tensor, shape) -> Tensor:
    return _make(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def transpose(x: Tensor, axes) -> Tensor:
    inv = np.argsort(axes)
    return _make(x.data.transpose(axes), (x,), lambda g: (g.transpose(inv),))


def concat(xs: Sequence[Tensor], axis: int = 1) -> Tensor:
    sizes = np.cumsum([x.shape[axis] for x in xs])[:-1]
    return _make(np.concatenate([x.data for x in xs], axis=axis), tuple(xs),
                 lambda g: tuple(np.split(g, sizes, axis=axis)))


def broadcast_time(x: Tensor, length: int) -> Tensor:
    """(batch, channels) -> (batch, channels, length) by repetition."""
    y = np.repeat(x.data[:, :, None], length, axis=2)
    return _make(y, (x,), lambda g: (g.sum(axis=2),))


def matmul(x: Tensor, w: Tensor) -> Tensor:
    """(batch, in) @ (out, in)^T."""
    return _make(x.data @ w.data.T, (x, w), lambda g: (g @ w.data, g.T @ x.data))


# -- convolution ----------------------------------------------------------

def _pads(kernel: int, padding: str) -> tuple[int, int]:
    if padding == "valid":
        return 0, 0
    if padding == "same":
        left = (kernel - 1) // 2
        return left, kernel - 1 - left
    raise ValueError(f"unknown padding {padding!r}")


def conv1d(x: Tensor, w: Tensor, b: Tensor | None = None, padding: str = "same") -> Tensor:
    """Cross-correlation along time. x (B, Cin, L), w (Cout, Cin, K), b (Cout,)."""
    if x.data.ndim != 3 or w.data.ndim != 3:
        raise ShapeMismatch(f"conv1d expects 3-d input and kernel, got {x.shape} and {w.shape}")
    if x.shape[1] != w.shape[1]:
        raise ShapeMismatch(f"input has {x.shape[1]} channels, kernel expects {w.shape[1]}")
    k = w.shape[2]
    left, right = _pads(k, padding)
    xp = np.pad(x.data, ((0, 0), (0, 0), (left, right))) if left or right else x.data
    if xp.shape[2] < k:
        raise ShapeMismatch(f"sequence of length {x.shape[2]} shorter than kernel {k}")
    win = sliding_window_view(xp, k, axis=2)  # (B, Cin, Lout, K)
    y = np.einsum("bclk,ock->bol", win, w.data, optimize=True)
    if b is not None:
        y = y + b.data[None, :, None]
    length = x.shape[2]

    def back(g):
        gw = np.einsum("bclk,bol->ock", win, g, optimize=True)
        gwin = np.einsum("ock,bol->bclk", w.data, g, optimize=True)
        gxp = np.zeros(xp.shape)
        lout = g.shape[2]
        for j in range(k):
            gxp[:, :, j:j + lout] += gwin[:, :, :, j]
        gx = gxp[:, :, left:left + length]
        gb = g.sum(axis=(0, 2)) if b is not None else None
        return gx, gw, gb

    parents = (x, w) if b is None else (x, w, b)
    if b is None:
        return _make(y, parents, lambda g: back(g)[:2])
    return _make(y, parents, back)


def conv2x(a: Tensor, c: Tensor, w: Tensor, b: Tensor | None = None, padding: str = "same") -> Tensor:
    """2-D convolution over two stacked streams whose kernel spans both rows.

    ``w`` has shape (Cout, Cin, 2, K). With the stream axis fully covered the
    result is 1-D again: y = conv1d(a, w[:, :, 0]) + conv1d(c, w[:, :, 1]) + b.
    """
    if a.shape != c.shape:
        raise ShapeMismatch(f"streams differ in shape: {a.shape} vs {c.shape}")
    if w.data.ndim != 4 or w.shape[2] != 2:
        raise ShapeMismatch(f"merge kernel must be (out, in, 2, k), got {w.shape}")
    cout, cin, _, k = w.shape
    flat = reshape(transpose(w, (0, 2, 1, 3)), (cout, 2 * cin, k))
    return conv1d(concat([a, c], axis=1), flat, b, padding)
