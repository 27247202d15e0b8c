"""Minimal reverse-mode autodiff over numpy arrays.

Only the ops the training graph needs: dense layers (matmul + bias), relu,
concatenation, cross-entropy against fixed target distributions, squared
error, gradient scaling and weighted sums. Everything is float64 and
batch-first; targets and masks are plain numpy arrays (no gradient flows
into them).
"""
from __future__ import annotations

import numpy as np


class GradientError(RuntimeError):
    """Raised when backward produces a non-finite gradient."""


class Tensor:
    """A node in the backward graph: value, gradient slot, local backward."""

    __slots__ = ("data", "grad", "_parents", "_backward", "requires_grad")

    def __init__(self, data, parents=(), backward=None, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self._parents = parents
        self._backward = backward
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def backward(self):
        """Accumulate dself/dparam into .grad for every reachable parameter."""
        topo: list[Tensor] = []
        seen = set()

        def build(node):
            if id(node) in seen or not node.requires_grad:
                return
            seen.add(id(node))
            for p in node._parents:
                build(p)
            topo.append(node)

        build(self)
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)
        for node in topo:
            if not node._parents and node.grad is not None:
                if not np.all(np.isfinite(node.grad)):
                    raise GradientError("non-finite gradient in backward pass")

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def _accum(t: Tensor, g):
    if t.requires_grad:
        t.grad = g if t.grad is None else t.grad + g


def param(data) -> Tensor:
    return Tensor(data, requires_grad=True)


def const(data) -> Tensor:
    return Tensor(data)


def matmul(x: Tensor, w: Tensor) -> Tensor:
    out = Tensor(x.data @ w.data, parents=(x, w))

    def back(g):
        _accum(x, g @ w.data.T)
        _accum(w, x.data.T @ g)

    out._backward = back
    return out


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    out = Tensor(x.data + b.data, parents=(x, b))

    def back(g):
        _accum(x, g)
        _accum(b, g.sum(axis=0))

    out._backward = back
    return out


def add(x: Tensor, y: Tensor) -> Tensor:
    out = Tensor(x.data + y.data, parents=(x, y))

    def back(g):
        _accum(x, g)
        _accum(y, g)

    out._backward = back
    return out


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0.0
    out = Tensor(np.where(mask, x.data, 0.0), parents=(x,))

    def back(g):
        _accum(x, g * mask)

    out._backward = back
    return out


def concat(x: Tensor, y: Tensor) -> Tensor:
    """Concatenate along the last (feature) axis."""
    out = Tensor(np.concatenate([x.data, y.data], axis=-1), parents=(x, y))
    split = x.data.shape[-1]

    def back(g):
        _accum(x, g[..., :split])
        _accum(y, g[..., split:])

    out._backward = back
    return out


def scale_grad(x: Tensor, factor: float) -> Tensor:
    """Identity forward; multiplies the gradient flowing back by `factor`."""
    out = Tensor(x.data, parents=(x,))

    def back(g):
        _accum(x, g * factor)

    out._backward = back
    return out


def normalize_rows(x: Tensor) -> Tensor:
    """Min-max scale each row to [0, 1], the hidden-state normalization
    used between model stages. Degenerate rows (max - min below 1e-5) get
    the denominator padded by 1e-5 instead of dividing by zero.

    The backward pass differentiates through the row min and max (first
    occurrence on ties): with p, q one-hot at argmin/argmax and d the
    guarded denominator,

        dx = (g - p * sum(g) - (q - p) * sum(g * y)) / d
    """
    data = x.data
    i_min = np.argmin(data, axis=-1)
    i_max = np.argmax(data, axis=-1)
    mn = np.take_along_axis(data, i_min[..., None], axis=-1)
    mx = np.take_along_axis(data, i_max[..., None], axis=-1)
    d = mx - mn
    d = np.where(d < 1e-5, d + 1e-5, d)
    y = (data - mn) / d
    out = Tensor(y, parents=(x,))

    def back(g):
        g_sum = g.sum(axis=-1, keepdims=True)
        gy_sum = (g * y).sum(axis=-1, keepdims=True)
        gx = g / d
        adj_min = (-g_sum + gy_sum) / d
        adj_max = -gy_sum / d
        flat = gx.copy()
        np.put_along_axis(
            flat, i_min[..., None],
            np.take_along_axis(flat, i_min[..., None], axis=-1) + adj_min,
            axis=-1)
        np.put_along_axis(
            flat, i_max[..., None],
            np.take_along_axis(flat, i_max[..., None], axis=-1) + adj_max,
            axis=-1)
        _accum(x, flat)

    out._backward = back
    return out


def mul_const(x: Tensor, c) -> Tensor:
    c = np.asarray(c, dtype=np.float64)
    out = Tensor(x.data * c, parents=(x,))

    def back(g):
        _accum(x, g * c)

    out._backward = back
    return out


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


def cross_entropy_logits(logits: Tensor, target_probs: np.ndarray) -> Tensor:
    """Per-row -sum(target * log_softmax(logits)); returns a (B,) tensor."""
    logp = log_softmax(logits.data)
    out = Tensor(-(target_probs * logp).sum(axis=-1), parents=(logits,))

    def back(g):
        _accum(logits, g[..., None] * (np.exp(logp) - target_probs))

    out._backward = back
    return out


def squared_error(pred: Tensor, target: np.ndarray) -> Tensor:
    """Per-row (pred - target)^2 for a (B, 1) or (B,) prediction."""
    p = pred.data.reshape(-1)
    diff = p - np.asarray(target, dtype=np.float64)
    out = Tensor(diff * diff, parents=(pred,))

    def back(g):
        _accum(pred, (2.0 * diff * g).reshape(pred.data.shape))

    out._backward = back
    return out


def weighted_sum(x: Tensor, weights) -> Tensor:
    """Scalar sum(x * weights) for a (B,) tensor and fixed (B,) weights."""
    w = np.asarray(weights, dtype=np.float64)
    out = Tensor((x.data * w).sum(), parents=(x,))

    def back(g):
        _accum(x, g * w)

    out._backward = back
    return out


def mean_vec(x: Tensor) -> Tensor:
    n = x.data.shape[0]
    return weighted_sum(x, np.full(n, 1.0 / n))
