"""Recurrent, dense and attention layers built on the autodiff primitives.

Sequences are ``(B, T, d)`` tensors, right-padded; ``lengths`` gives the
number of valid steps per row.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autodiff import Graph, Params, Tensor, ops

NEG_INF = -1e30


def uniform(rng: np.random.Generator, shape, fan: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(max(fan, 1))
    return rng.uniform(-bound, bound, size=shape)


class Dense:
    def __init__(self, params: Params, name: str, d_in: int, d_out: int, rng: np.random.Generator,
                 bias: bool = True):
        self.w = params.new(f"{name}.w", uniform(rng, (d_in, d_out), d_in))
        self.b = params.new(f"{name}.b", np.zeros(d_out)) if bias else None
        self.d_in, self.d_out = d_in, d_out

    def __call__(self, g: Graph, x: Tensor, trainable: bool = True) -> Tensor:
        y = ops.matmul(x, g.param(self.w, trainable))
        if self.b is not None:
            y = ops.add(y, g.param(self.b, trainable))
        return y


class LSTM:
    """Single-direction LSTM layer; gate order is input, forget, output, cell."""

    def __init__(self, params: Params, name: str, d_in: int, hidden: int, rng: np.random.Generator):
        self.hidden = hidden
        self.wx = params.new(f"{name}.wx", uniform(rng, (d_in, 4 * hidden), hidden))
        self.wh = params.new(f"{name}.wh", uniform(rng, (hidden, 4 * hidden), hidden))
        b = np.zeros(4 * hidden)
        b[hidden:2 * hidden] = 1.0
        self.b = params.new(f"{name}.b", b)

    def project(self, g: Graph, x: Tensor, trainable: bool = True) -> Tensor:
        return ops.add(ops.matmul(x, g.param(self.wx, trainable)), g.param(self.b, trainable))

    def gates(self, g: Graph, gx: Tensor, h: Tensor | None, c: Tensor | None,
              trainable: bool = True) -> tuple[Tensor, Tensor]:
        """Advance one step from the input projection ``gx`` (B, 4H)."""
        H = self.hidden
        z = gx if h is None else ops.add(gx, ops.matmul(h, g.param(self.wh, trainable)))
        s = ops.sigmoid(ops.getitem(z, (slice(None), slice(0, 3 * H))))
        i = ops.getitem(s, (slice(None), slice(0, H)))
        o = ops.getitem(s, (slice(None), slice(2 * H, 3 * H)))
        cand = ops.tanh(ops.getitem(z, (slice(None), slice(3 * H, 4 * H))))
        if c is None:
            c_new = ops.mul(i, cand)
        else:
            f = ops.getitem(s, (slice(None), slice(H, 2 * H)))
            c_new = ops.add(ops.mul(f, c), ops.mul(i, cand))
        return ops.mul(o, ops.tanh(c_new)), c_new

    def cell(self, g: Graph, x: Tensor, h: Tensor | None, c: Tensor | None,
             trainable: bool = True) -> tuple[Tensor, Tensor]:
        return self.gates(g, self.project(g, x, trainable), h, c, trainable)

    def run(self, g: Graph, xs: Tensor, lengths: np.ndarray, reverse: bool = False,
            trainable: bool = True) -> Tensor:
        """Outputs ``(B, T, H)`` for input ``(B, T, d_in)``.

        Rows past their length carry junk that is never read; in the reverse
        direction the state stays zero until a row's last valid step so padding
        cannot leak in."""
        B, T, _ = xs.shape
        gx = self.project(g, xs, trainable)
        out: list[Tensor | None] = [None] * T
        h = c = None
        order = range(T - 1, -1, -1) if reverse else range(T)
        for t in order:
            h, c = self.gates(g, ops.getitem(gx, (slice(None), t)), h, c, trainable)
            if reverse:
                valid = lengths > t
                if not valid.all():
                    m = np.broadcast_to(valid[:, None].astype(float), h.shape)
                    h, c = ops.mul(h, m), ops.mul(c, m)
            out[t] = h
        return ops.stack(out, axis=1)


class StackedLSTM:
    """Stacked (optionally bidirectional) LSTM; bidirectional layers concatenate
    forward and backward outputs per step."""

    def __init__(self, params: Params, name: str, d_in: int, hidden: int, layers: int,
                 rng: np.random.Generator, bidirectional: bool = True):
        self.bidirectional = bidirectional
        self.layers = []
        d = d_in
        for k in range(layers):
            fw = LSTM(params, f"{name}.l{k}.fw", d, hidden, rng)
            bw = LSTM(params, f"{name}.l{k}.bw", d, hidden, rng) if bidirectional else None
            self.layers.append((fw, bw))
            d = 2 * hidden if bidirectional else hidden
        self.d_out = d

    def run(self, g: Graph, xs: Tensor, lengths: np.ndarray, trainable: bool = True) -> Tensor:
        for fw, bw in self.layers:
            f = fw.run(g, xs, lengths, trainable=trainable)
            if bw is None:
                xs = f
            else:
                xs = ops.concat([f, bw.run(g, xs, lengths, reverse=True, trainable=trainable)], axis=-1)
        return xs


@dataclass
class AttentionMemory:
    """Per-utterance precomputation shared by every decoder step."""
    keys: Tensor      # (B, T, heads*depth)
    values: Tensor    # (B, T, heads, value_dim)
    mask: np.ndarray  # (B, T, heads) additive, 0 or NEG_INF
    lengths: np.ndarray


class MultiHeadAttention:
    """Additive (Bahdanau) attention with several heads.

    Head k scores frame t as ``v_k . tanh(Wq_k q + Wz_k z_t)``, averages the
    projected values ``Wv_k z_t`` with the softmax weights, and the
    concatenated head contexts go through one output projection.
    """

    def __init__(self, params: Params, name: str, d_query: int, d_memory: int, heads: int,
                 depth: int, d_out: int, rng: np.random.Generator):
        if heads < 1:
            raise ValueError("attention needs at least one head")
        self.heads, self.depth, self.d_out = heads, depth, d_out
        self.wq = params.new(f"{name}.wq", uniform(rng, (d_query, heads * depth), d_query))
        self.wz = params.new(f"{name}.wz", uniform(rng, (d_memory, heads * depth), d_memory))
        self.v = params.new(f"{name}.v", uniform(rng, (heads * depth,), depth))
        self.wv = params.new(f"{name}.wv", uniform(rng, (d_memory, heads * depth), d_memory))
        self.out = Dense(params, f"{name}.out", heads * depth, d_out, rng)

    def memory(self, g: Graph, z: Tensor, lengths: np.ndarray, trainable: bool = True) -> AttentionMemory:
        B, T, _ = z.shape
        if T == 0:
            raise ValueError("attention over an empty memory")
        keys = ops.matmul(z, g.param(self.wz, trainable))
        values = ops.reshape(ops.matmul(z, g.param(self.wv, trainable)), (B, T, self.heads, self.depth))
        valid = np.arange(T)[None, :] < np.asarray(lengths)[:, None]
        mask = np.where(valid, 0.0, NEG_INF)[:, :, None].repeat(self.heads, axis=2)
        return AttentionMemory(keys, values, mask, np.asarray(lengths))

    def __call__(self, g: Graph, query: Tensor, mem: AttentionMemory,
                 trainable: bool = True) -> tuple[Tensor, np.ndarray]:
        """Context ``(B, d_out)`` and the attention weights ``(B, T, heads)``."""
        B, T, HD = mem.keys.shape
        q = ops.reshape(ops.matmul(query, g.param(self.wq, trainable)), (B, 1, HD))
        e = ops.tanh(ops.add(ops.broadcast_to(q, (B, T, HD)), mem.keys))
        scores = ops.sum(ops.reshape(ops.mul(e, g.param(self.v, trainable)), (B, T, self.heads, self.depth)), axis=-1)
        w = ops.softmax(ops.add(scores, mem.mask), axis=1)
        w4 = ops.broadcast_to(ops.reshape(w, (B, T, self.heads, 1)), (B, T, self.heads, self.depth))
        ctx = ops.sum(ops.mul(w4, mem.values), axis=1)
        ctx = ops.reshape(ctx, (B, self.heads * self.depth))
        return self.out(g, ctx, trainable), w.data


def masked_mean(g: Graph, xs: Tensor, lengths: np.ndarray) -> Tensor:
    """Mean over the valid prefix of axis 1; an empty row pools to zeros."""
    B, T, D = xs.shape
    lengths = np.asarray(lengths)
    valid = (np.arange(T)[None, :] < lengths[:, None]).astype(float)
    summed = ops.sum(ops.mul(xs, np.broadcast_to(valid[:, :, None], (B, T, D))), axis=1)
    inv = np.where(lengths > 0, 1.0 / np.maximum(lengths, 1), 0.0)
    return ops.mul(summed, np.broadcast_to(inv[:, None], (B, D)))


class IntentHead:
    """dense -> mean pool over time -> two ReLU layers -> intent logits."""

    def __init__(self, params: Params, name: str, d_in: int, hidden: int, n_intents: int,
                 rng: np.random.Generator):
        self.proj = Dense(params, f"{name}.proj", d_in, hidden, rng)
        self.ff1 = Dense(params, f"{name}.ff1", hidden, hidden, rng)
        self.ff2 = Dense(params, f"{name}.ff2", hidden, hidden, rng)
        self.cls = Dense(params, f"{name}.cls", hidden, n_intents, rng)

    def __call__(self, g: Graph, xs: Tensor, lengths: np.ndarray, trainable: bool = True) -> Tensor:
        B = xs.shape[0]
        if xs.shape[1] == 0:
            pooled = g.constant(np.zeros((B, self.proj.d_out)))
        else:
            pooled = masked_mean(g, self.proj(g, xs, trainable), lengths)
        h = ops.relu(self.ff1(g, pooled, trainable))
        h = ops.relu(self.ff2(g, h, trainable))
        return self.cls(g, h, trainable)
