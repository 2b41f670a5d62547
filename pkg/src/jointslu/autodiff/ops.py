"""Differentiable primitives.

Elementwise binary ops accept equal shapes, a scalar operand, or an operand
whose shape is a trailing suffix of the other's (bias-style broadcast).  Any
other broadcast must be spelled out with :func:`broadcast_to`.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .tensor import DTYPE, Graph, ShapeError, SliceGrad, Tensor


def as_tensor(x, graph: Graph) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return graph.constant(x)


def _graph_of(*xs) -> Graph:
    for x in xs:
        if isinstance(x, Tensor):
            return x.graph
    raise TypeError("at least one operand must be a Tensor")


def _pair(name: str, a, b) -> tuple[Tensor, Tensor]:
    g = _graph_of(a, b)
    a, b = as_tensor(a, g), as_tensor(b, g)
    sa, sb = a.data.shape, b.data.shape
    if sa == sb or a.data.size == 1 or b.data.size == 1:
        return a, b
    if len(sb) < len(sa) and sa[len(sa) - len(sb):] == sb:
        return a, b
    if len(sa) < len(sb) and sb[len(sb) - len(sa):] == sa:
        return a, b
    raise ShapeError(f"{name}: cannot broadcast shapes {sa} and {sb}")


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    if int(np.prod(shape)) == 1:
        return grad.sum().reshape(shape)
    lead = grad.ndim - len(shape)
    out = grad.sum(axis=tuple(range(lead))) if lead else grad
    keep = tuple(i for i, n in enumerate(shape) if n == 1 and out.shape[i] != 1)
    if keep:
        out = out.sum(axis=keep, keepdims=True)
    return out


# --- arithmetic --------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _pair("add", a, b)
    sa, sb = a.data.shape, b.data.shape
    return a.graph.record(a.data + b.data, (a, b),
                          lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = _pair("sub", a, b)
    sa, sb = a.data.shape, b.data.shape
    return a.graph.record(a.data - b.data, (a, b),
                          lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b) -> Tensor:
    a, b = _pair("mul", a, b)
    ad, bd = a.data, b.data
    return a.graph.record(ad * bd, (a, b),
                          lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """``a @ b`` for (..., n) x (n, m) or batched (B, k, n) x (B, n, m)."""
    g = _graph_of(a, b)
    a, b = as_tensor(a, g), as_tensor(b, g)
    ad, bd = a.data, b.data
    ok = bd.ndim >= 2 and ad.shape[-1] == bd.shape[-2] and (bd.ndim == 2 or ad.ndim == bd.ndim)
    if not ok or ad.ndim == 0:
        raise ShapeError(f"matmul: shapes {ad.shape} and {bd.shape} do not conform")
    if ad.ndim == bd.ndim and ad.ndim > 2 and ad.shape[:-2] != bd.shape[:-2]:
        raise ShapeError(f"matmul: batch shapes {ad.shape} and {bd.shape} differ")

    def backward(gr):
        if ad.ndim == 1:
            return bd @ gr, np.outer(ad, gr)
        ga = gr @ np.swapaxes(bd, -1, -2)
        if bd.ndim == 2:
            gb = ad.reshape(-1, ad.shape[-1]).T @ gr.reshape(-1, gr.shape[-1])
        else:
            gb = np.swapaxes(ad, -1, -2) @ gr
        return ga, gb

    return g.record(ad @ bd, (a, b), backward)


# --- elementwise nonlinearities ---------------------------------------------

def sigmoid(x: Tensor) -> Tensor:
    s = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return x.graph.record(s, (x,), lambda g: (g * s * (1.0 - s),))


def tanh(x: Tensor) -> Tensor:
    t = np.tanh(x.data)
    return x.graph.record(t, (x,), lambda g: (g * (1.0 - t * t),))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return x.graph.record(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def exp(x: Tensor) -> Tensor:
    e = np.exp(x.data)
    return x.graph.record(e, (x,), lambda g: (g * e,))


def log(x: Tensor) -> Tensor:
    if np.any(x.data <= 0):
        raise ValueError("log: input must be strictly positive")
    xd = x.data
    return x.graph.record(np.log(xd), (x,), lambda g: (g / xd,))


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)
    return x.graph.record(s, (x,), lambda g: (s * (g - (g * s).sum(axis=axis, keepdims=True)),))


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse

    def backward(g):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)

    return x.graph.record(out, (x,), backward)


# --- reductions ----------------------------------------------------------------

def sum(x: Tensor, axis: int | None = None) -> Tensor:  # noqa: A001
    shape = x.data.shape
    out = x.data.sum(axis=axis)

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, shape),)
        return (np.broadcast_to(np.expand_dims(g, axis), shape),)

    return x.graph.record(np.asarray(out, dtype=DTYPE), (x,), backward)


def mean(x: Tensor, axis: int | None = None) -> Tensor:
    shape = x.data.shape
    n = x.data.size if axis is None else shape[axis]
    if n == 0:
        raise ShapeError(f"mean: empty axis in shape {shape}")
    out = x.data.mean(axis=axis)

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g / n, shape),)
        return (np.broadcast_to(np.expand_dims(g / n, axis), shape),)

    return x.graph.record(np.asarray(out, dtype=DTYPE), (x,), backward)


# --- structural --------------------------------------------------------------

def concat(xs: Sequence[Tensor], axis: int = -1) -> Tensor:
    if not xs:
        raise ShapeError("concat: no inputs")
    g = _graph_of(*xs)
    xs = [as_tensor(x, g) for x in xs]
    ref = xs[0].data.shape
    ax = axis % len(ref)
    for x in xs[1:]:
        s = x.data.shape
        if len(s) != len(ref) or s[:ax] + s[ax + 1:] != ref[:ax] + ref[ax + 1:]:
            raise ShapeError(f"concat: shapes {ref} and {s} differ off axis {axis}")
    sizes = [x.data.shape[ax] for x in xs]
    cuts = np.cumsum(sizes)[:-1]
    out = np.concatenate([x.data for x in xs], axis=ax)
    return g.record(out, xs, lambda gr: tuple(np.split(gr, cuts, axis=ax)))


def stack(xs: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not xs:
        raise ShapeError("stack: no inputs")
    g = _graph_of(*xs)
    xs = [as_tensor(x, g) for x in xs]
    ref = xs[0].data.shape
    for x in xs[1:]:
        if x.data.shape != ref:
            raise ShapeError(f"stack: shapes {ref} and {x.data.shape} differ")
    out = np.stack([x.data for x in xs], axis=axis)
    n = len(xs)
    ax = axis % (len(ref) + 1)
    lead = (slice(None),) * ax
    return g.record(out, xs, lambda gr: tuple(gr[lead + (i,)] for i in range(n)))


def getitem(x: Tensor, index) -> Tensor:
    """Slice or integer-array indexing; gradients scatter back with accumulation."""
    shape = x.data.shape
    try:
        out = x.data[index]
    except IndexError as exc:
        raise ShapeError(f"slice: index {index!r} invalid for shape {shape}") from exc
    idx = index if isinstance(index, tuple) else (index,)
    fancy = any(isinstance(i, (list, np.ndarray)) for i in idx)

    def backward(g):
        return (SliceGrad(index, g, fancy),)

    return x.graph.record(out, (x,), backward)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    src = x.data.shape
    try:
        out = x.data.reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"reshape: cannot reshape {src} to {tuple(shape)}") from exc
    return x.graph.record(out, (x,), lambda g: (g.reshape(src),))


def broadcast_to(x: Tensor, shape: Sequence[int]) -> Tensor:
    """Explicit numpy-style broadcast; the gradient sums the expanded axes."""
    src = x.data.shape
    try:
        out = np.broadcast_to(x.data, tuple(shape))
    except ValueError as exc:
        raise ShapeError(f"broadcast_to: cannot broadcast {src} to {tuple(shape)}") from exc
    return x.graph.record(out, (x,), lambda g: (_unbroadcast(g, src),))


def embedding(table: Tensor, ids) -> Tensor:
    """Rows of ``table`` gathered by integer ``ids`` (any shape)."""
    ids = np.asarray(ids, dtype=np.int64)
    n = table.data.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= n):
        raise ShapeError(f"embedding: ids out of range for table of {n} rows")
    shape = table.data.shape

    def backward(g):
        return (SliceGrad(ids.reshape(-1), g.reshape(-1, shape[1]), fancy=True),)

    return table.graph.record(table.data[ids], (table,), backward)


# --- losses ------------------------------------------------------------------

def smoothed_targets(targets, vocab_size: int, smoothing: float) -> np.ndarray:
    """Target distributions: ``1 - eps`` on the label, ``eps / (V - 1)`` elsewhere."""
    targets = np.asarray(targets, dtype=np.int64)
    if not 0.0 <= smoothing < 1.0:
        raise ValueError(f"smoothing must be in [0, 1), got {smoothing}")
    if targets.size and (targets.min() < 0 or targets.max() >= vocab_size):
        raise ValueError(f"target index out of range for {vocab_size} classes")
    off = smoothing / (vocab_size - 1) if vocab_size > 1 else 0.0
    q = np.full(targets.shape + (vocab_size,), off, dtype=DTYPE)
    np.put_along_axis(q, targets[..., None], 1.0 - smoothing, axis=-1)
    return q


def cross_entropy(logits: Tensor, target, smoothing: float = 0.0, weights=None) -> Tensor:
    """Label-smoothed cross-entropy.

    For rank-1 ``logits`` ``target`` is a single index and the result is that
    row's loss.  For ``(N, V)`` logits ``target`` holds N indices and the
    result is ``sum_n weights[n] * loss[n]`` (weights default to 1).
    """
    v = logits.data.shape[-1]
    q = smoothed_targets(target, v, smoothing)
    if logits.data.ndim == 1:
        return mul(sum(mul(log_softmax(logits), q)), -1.0)
    rows = sum(mul(log_softmax(logits), q), axis=-1)
    w = np.ones(rows.data.shape) if weights is None else np.asarray(weights, dtype=DTYPE)
    return mul(sum(mul(rows, w)), -1.0)
