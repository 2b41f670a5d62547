"""Neural NLU: BiLSTM slot tagger plus a pooled intent classifier.

In compositional mode each position's input is the piece embedding from the
model's own table.  In joint mode it is the recognizer's decoder output
``h_i`` concatenated with the embedding ``e_i`` of the piece it consumed.
"""
from __future__ import annotations

import numpy as np

from ..autodiff import Graph, Params, Tensor, ops
from ..config import ModelConfig
from .layers import Dense, IntentHead, StackedLSTM


class NLU:
    def __init__(self, cfg: ModelConfig, n_intents: int, n_tags: int, rng: np.random.Generator,
                 vocab_size: int | None = None, interface_dim: int | None = None,
                 params: Params | None = None, prefix: str = "nlu"):
        if (vocab_size is None) == (interface_dim is None):
            raise ValueError("give exactly one of vocab_size (compositional) or interface_dim (joint)")
        self.cfg = cfg
        self.params = params if params is not None else Params()
        p = self.params
        self.joint = interface_dim is not None
        if self.joint:
            self.embedding = None
            d_in = interface_dim
        else:
            self.embedding = p.new(f"{prefix}.emb", rng.normal(0.0, 0.1, (vocab_size, cfg.emb_dim)))
            d_in = cfg.emb_dim
        self.d_in = d_in
        self.n_intents, self.n_tags = n_intents, n_tags
        self.bilstm = StackedLSTM(p, f"{prefix}.slot", d_in, cfg.nlu_hidden, cfg.nlu_layers, rng)
        self.slot_out = Dense(p, f"{prefix}.slot.out", self.bilstm.d_out, n_tags, rng)
        self.intent = IntentHead(p, f"{prefix}.intent", d_in, cfg.intent_hidden, n_intents, rng)
        self.prefix = prefix

    def inputs_from_pieces(self, g: Graph, pieces: list[list[int]], trainable: bool = True
                           ) -> tuple[Tensor, np.ndarray]:
        if self.joint:
            raise ValueError("joint-mode NLU reads decoder traces, not piece ids")
        lengths = np.array([len(p) for p in pieces])
        m = int(lengths.max(initial=0))
        ids = np.zeros((len(pieces), m), dtype=np.int64)
        for b, p in enumerate(pieces):
            ids[b, :len(p)] = p
        if ids.size and (ids.min() < 0 or ids.max() >= self.embedding.shape[0]):
            raise ValueError("piece id outside the vocabulary")
        table = g.param(self.embedding, trainable)
        return ops.embedding(table, ids), lengths

    def forward(self, g: Graph, xs: Tensor, lengths: np.ndarray, trainable: bool = True
                ) -> tuple[Tensor, Tensor]:
        """Intent logits ``(B, n_intents)`` and slot logits ``(B, m, n_tags)``."""
        B, m, d = xs.shape
        if d != self.d_in:
            raise ValueError(f"NLU expects inputs of width {self.d_in}, got {d}")
        intent = self.intent(g, xs, lengths, trainable)
        if m == 0:
            return intent, g.constant(np.zeros((B, 0, self.n_tags)))
        slots = self.slot_out(g, self.bilstm.run(g, xs, lengths, trainable), trainable)
        return intent, slots


def interface_inputs(g: Graph, hs: list[Tensor], es: list[Tensor], zero_h: bool = False) -> Tensor:
    """Stack per-step ``[h_i; e_i]`` into ``(B, m, H + E)``.

    ``zero_h`` multiplies the ``h`` half by zero, a hook for checking that the
    joint NLU reduces to the compositional one."""
    if not hs:
        raise ValueError("joint-mode NLU needs a decoder trace")
    h = ops.stack(hs, axis=1)
    if zero_h:
        h = ops.mul(h, 0.0)
    return ops.concat([h, ops.stack(es, axis=1)], axis=-1)


def nlu_loss(g: Graph, intent_logits: Tensor, slot_logits: Tensor, lengths: np.ndarray,
             intents: np.ndarray, tags: list[list[int]], smoothing: float = 0.0
             ) -> tuple[Tensor, Tensor]:
    """Batch-mean intent CE and batch-mean of each utterance's mean per-piece slot CE."""
    B = len(intents)
    intent_loss = ops.cross_entropy(intent_logits, intents, smoothing, np.full(B, 1.0 / B))
    m = slot_logits.shape[1]
    if m == 0:
        return intent_loss, g.constant(0.0)
    target = np.zeros((B, m), dtype=np.int64)
    weight = np.zeros((B, m))
    for b, t in enumerate(tags):
        if len(t) != lengths[b]:
            raise ValueError(f"row {b}: {len(t)} slot targets for {lengths[b]} pieces")
        target[b, :len(t)] = t
        if len(t):
            weight[b, :len(t)] = 1.0 / (len(t) * B)
    flat = ops.reshape(slot_logits, (B * m, slot_logits.shape[2]))
    slot_loss = ops.cross_entropy(flat, target.reshape(-1), smoothing, weight.reshape(-1))
    return intent_loss, slot_loss


def nlu_forward(nlu: NLU, piece_ids: list[int] | None = None,
                interface: tuple[np.ndarray, np.ndarray] | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Intent logits and ``(pieces, tags)`` slot logits for one utterance.

    Compositional models take ``piece_ids``; joint models take the trace
    arrays ``(h, e)``, each ``(pieces, width)``."""
    g = Graph(grad_enabled=False)
    if nlu.joint:
        if interface is None:
            raise ValueError("joint-mode NLU needs the (h, e) trace")
        h, e = (np.asarray(a, dtype=float) for a in interface)
        if len(h) != len(e):
            raise ValueError("h and e traces differ in length")
        xs = g.constant(np.concatenate([h, e], axis=-1)[None]) if len(h) else \
            g.constant(np.zeros((1, 0, nlu.d_in)))
        lengths = np.array([len(h)])
    else:
        if piece_ids is None:
            raise ValueError("compositional NLU needs piece ids")
        xs, lengths = nlu.inputs_from_pieces(g, [list(piece_ids)], trainable=False)
    il, sl = nlu.forward(g, xs, lengths, trainable=False)
    return il.data[0], sl.data[0]
