"""A small reverse-mode autodiff tensor over numpy arrays.

Every op records a closure that pushes the output gradient back onto its
inputs. Arrays default to float32; float64 inputs stay float64, which the
gradient checks rely on.
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import DimensionError

_grad_enabled = True


@contextmanager
def no_grad():
    """Disable graph recording inside the block (inference paths)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _as_array(data, dtype=None) -> np.ndarray:
    if dtype is not None:
        return np.asarray(data, dtype=dtype)
    if isinstance(data, np.ndarray) and data.dtype in (np.float32, np.float64):
        return data
    return np.asarray(data, dtype=np.float32)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        self.data = _as_array(data, dtype)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None

    # -- bookkeeping ---------------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    def _accum(self, g: np.ndarray) -> None:
        g = _unbroadcast(g, self.data.shape)
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def backward(self, grad: np.ndarray | None = None) -> None:
        if grad is None:
            if self.data.size != 1:
                raise DimensionError(f"backward() without a seed needs a scalar, got shape {self.shape}")
            grad = np.ones_like(self.data)
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self._accum(np.asarray(grad, dtype=self.data.dtype))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- arithmetic ----------------------------------------------------------
    def __add__(self, other) -> "Tensor":
        other = _lift(other, self.dtype)
        out = self.data + other.data

        def back(g):
            if self.requires_grad:
                self._accum(g)
            if other.requires_grad:
                other._accum(g)

        return _make(out, (self, other), back)

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        def back(g):
            self._accum(-g)

        return _make(-self.data, (self,), back)

    def __sub__(self, other) -> "Tensor":
        return self + (-_lift(other, self.dtype))

    def __rsub__(self, other) -> "Tensor":
        return _lift(other, self.dtype) + (-self)

    def __mul__(self, other) -> "Tensor":
        other = _lift(other, self.dtype)
        out = self.data * other.data

        def back(g):
            if self.requires_grad:
                self._accum(g * other.data)
            if other.requires_grad:
                other._accum(g * self.data)

        return _make(out, (self, other), back)

    __rmul__ = __mul__

    def __truediv__(self, scalar: float) -> "Tensor":
        return self * (1.0 / scalar)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    # -- shape ops -----------------------------------------------------------
    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        src = self.data.shape

        def back(g):
            self._accum(g.reshape(src))

        return _make(self.data.reshape(shape), (self,), back)

    def swapaxes(self, a1: int, a2: int) -> "Tensor":
        def back(g):
            self._accum(np.swapaxes(g, a1, a2))

        return _make(np.swapaxes(self.data, a1, a2), (self,), back)

    @property
    def mT(self) -> "Tensor":
        return self.swapaxes(-1, -2)

    def __getitem__(self, key) -> "Tensor":
        src_shape = self.data.shape

        def back(g):
            full = np.zeros(src_shape, dtype=g.dtype)
            np.add.at(full, key, g)
            self._accum(full)

        return _make(self.data[key], (self,), back)

    # -- reductions ----------------------------------------------------------
    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        src_shape = self.data.shape

        def back(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            self._accum(np.broadcast_to(g, src_shape))

        return _make(self.data.sum(axis=axis, keepdims=keepdims), (self,), back)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        n = self.data.size if axis is None else np.prod([self.data.shape[a] for a in np.atleast_1d(axis)])
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / float(n))

    # -- elementwise nonlinearities -----------------------------------------
    def tanh(self) -> "Tensor":
        t = np.tanh(self.data)

        def back(g):
            self._accum(g * (1 - t * t))

        return _make(t, (self,), back)

    def exp(self) -> "Tensor":
        e = np.exp(self.data)

        def back(g):
            self._accum(g * e)

        return _make(e, (self,), back)


def _lift(x, dtype) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _make(data: np.ndarray, parents: Sequence[Tensor], back: Callable[[np.ndarray], None]) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = back
    return out


def tensor(data, requires_grad: bool = False, dtype=None) -> Tensor:
    return Tensor(data, requires_grad=requires_grad, dtype=dtype)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul needs >=2-d operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul inner dimensions disagree: {a.shape} @ {b.shape}")
    out = a.data @ b.data

    def back(g):
        if a.requires_grad:
            a._accum(g @ np.swapaxes(b.data, -1, -2))
        if b.requires_grad:
            b._accum(np.swapaxes(a.data, -1, -2) @ g)

    return _make(out, (a, b), back)


def concat(tensors: Iterable[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def back(g):
        for t, piece in zip(tensors, np.split(g, splits, axis=axis)):
            if t.requires_grad:
                t._accum(piece)

    return _make(np.concatenate([t.data for t in tensors], axis=axis), tensors, back)


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    """Row lookup ``table[ids]``; the backward pass scatter-adds into the table."""
    ids = np.asarray(ids, dtype=np.int64)

    def back(g):
        full = np.zeros_like(table.data)
        np.add.at(full, ids, g)
        table._accum(full)

    return _make(table.data[ids], (table,), back)


def softmax(x: Tensor, key_mask: np.ndarray | None = None) -> Tensor:
    """Softmax over the last axis, stabilised by subtracting the row max.

    ``key_mask`` (broadcastable to ``x``) marks valid entries; invalid ones get
    a score of -inf and therefore probability exactly 0.
    """
    s = x.data
    if key_mask is not None:
        s = np.where(key_mask, s, -np.inf)
    s = s - s.max(axis=-1, keepdims=True)
    e = np.exp(s)
    p = e / e.sum(axis=-1, keepdims=True)

    def back(g):
        x._accum(p * (g - (g * p).sum(axis=-1, keepdims=True)))

    return _make(p, (x,), back)


def softmax_rows(x: Tensor) -> Tensor:
    return softmax(x)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + np.asarray(eps, dtype=x.dtype))
    xhat = xc * inv
    out = xhat * gain.data + bias.data

    def back(g):
        if gain.requires_grad:
            gain._accum(g * xhat)
        if bias.requires_grad:
            bias._accum(g)
        if x.requires_grad:
            gx = g * gain.data
            x._accum(inv * (gx - gx.mean(axis=-1, keepdims=True)
                            - xhat * (gx * xhat).mean(axis=-1, keepdims=True)))

    return _make(out, (x, gain, bias), back)


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(x: Tensor) -> Tensor:
    """GELU, tanh approximation."""
    v = x.data
    c = np.asarray(_GELU_C, dtype=v.dtype)
    k = np.asarray(0.044715, dtype=v.dtype)
    inner = c * (v + k * v * v * v)
    t = np.tanh(inner)
    out = 0.5 * v * (1 + t)

    def back(g):
        d = 0.5 * (1 + t) + 0.5 * v * (1 - t * t) * c * (1 + 3 * k * v * v)
        x._accum(g * d)

    return _make(out, (x,), back)


def bce_with_logits(logits: Tensor, labels: np.ndarray, clamp: float = 1e-7) -> Tensor:
    """Mean binary cross-entropy of ``sigmoid(logits)`` against 0/1 labels.

    Probabilities are clamped to [clamp, 1 - clamp]; inside that band the
    gradient w.r.t. each logit is ``(p - y) / n``, outside it is zero.
    """
    z = logits.data.astype(np.float64)
    y = np.asarray(labels, dtype=np.float64).reshape(z.shape)
    p = 1.0 / (1.0 + np.exp(-z))
    pc = np.clip(p, clamp, 1.0 - clamp)
    losses = -(y * np.log(pc) + (1 - y) * np.log(1 - pc))
    n = max(z.size, 1)
    out = np.asarray(losses.mean(), dtype=logits.dtype)
    live = (p > clamp) & (p < 1.0 - clamp)

    def back(g):
        logits._accum((float(g) * np.where(live, p - y, 0.0) / n).astype(logits.dtype))

    return _make(out, (logits,), back)
