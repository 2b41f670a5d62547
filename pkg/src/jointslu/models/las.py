"""Listen-attend-spell recognizer: BiLSTM encoder, multi-head additive
attention, autoregressive LSTM decoder over subword pieces."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autodiff import Graph, Params, Tensor, ops
from ..config import ModelConfig
from ..tokenizer import EOS, PAD, SOS
from .layers import AttentionMemory, Dense, LSTM, MultiHeadAttention, StackedLSTM


@dataclass
class EncoderOutput:
    z: Tensor                # (B, T, 2 * enc_hidden)
    lengths: np.ndarray
    memory: AttentionMemory


@dataclass
class DecoderState:
    h: list[Tensor | None]
    c: list[Tensor | None]
    context: Tensor


@dataclass
class DecoderTrace:
    """Per-step decoder outputs of a teacher-forced pass.

    ``h[i]`` is the top LSTM output at step i and ``e[i]`` the embedding of the
    piece fed in at step i (SOS at step 0)."""
    h: list[Tensor]
    e: list[Tensor]
    weights: list[np.ndarray]


def pad_features(feats: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    lengths = np.array([len(f) for f in feats])
    if lengths.min(initial=1) < 1:
        raise ValueError("every utterance needs at least one frame")
    out = np.zeros((len(feats), lengths.max(), feats[0].shape[1]))
    for b, f in enumerate(feats):
        out[b, :len(f)] = f
    return out, lengths


def teacher_forcing_arrays(pieces: list[list[int]]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Decoder inputs (SOS + pieces), targets (pieces + EOS) and the step mask."""
    L = max(len(p) for p in pieces) + 1
    B = len(pieces)
    inp = np.full((B, L), PAD, dtype=np.int64)
    out = np.full((B, L), PAD, dtype=np.int64)
    mask = np.zeros((B, L))
    for b, p in enumerate(pieces):
        inp[b, 0] = SOS
        inp[b, 1:len(p) + 1] = p
        out[b, :len(p)] = p
        out[b, len(p)] = EOS
        mask[b, :len(p) + 1] = 1.0
    return inp, out, mask


class LAS:
    def __init__(self, cfg: ModelConfig, vocab_size: int, rng: np.random.Generator,
                 params: Params | None = None, prefix: str = "asr"):
        self.cfg = cfg
        self.vocab_size = vocab_size
        self.params = params if params is not None else Params()
        p = self.params
        self.encoder = StackedLSTM(p, f"{prefix}.enc", cfg.feat_dim, cfg.enc_hidden, cfg.enc_layers, rng)
        self.attention = MultiHeadAttention(p, f"{prefix}.att", cfg.dec_hidden, self.encoder.d_out,
                                            cfg.att_heads, cfg.att_depth, cfg.att_out, rng)
        self.embedding = p.new(f"{prefix}.dec.emb", rng.normal(0.0, 0.1, (vocab_size, cfg.emb_dim)))
        self.decoder = []
        d = cfg.emb_dim + cfg.att_out
        for k in range(cfg.dec_layers):
            self.decoder.append(LSTM(p, f"{prefix}.dec.l{k}", d, cfg.dec_hidden, rng))
            d = cfg.dec_hidden
        self.output = Dense(p, f"{prefix}.dec.out", cfg.dec_hidden, vocab_size, rng)
        self.prefix = prefix

    def asr_params(self):
        return self.params.subset(self.prefix + ".")

    # --- encoder -----------------------------------------------------------

    def encode(self, g: Graph, feats: list[np.ndarray], trainable: bool = True) -> EncoderOutput:
        x, lengths = pad_features(feats)
        z = self.encoder.run(g, g.constant(x), lengths, trainable)
        return EncoderOutput(z, lengths, self.attention.memory(g, z, lengths, trainable))

    # --- decoder -----------------------------------------------------------

    def initial_state(self, g: Graph, enc: EncoderOutput, trainable: bool = True) -> DecoderState:
        B = enc.z.shape[0]
        query = g.constant(np.zeros((B, self.cfg.dec_hidden)))
        ctx, _ = self.attention(g, query, enc.memory, trainable)
        n = len(self.decoder)
        return DecoderState([None] * n, [None] * n, ctx)

    def step(self, g: Graph, enc: EncoderOutput, state: DecoderState, prev_ids: np.ndarray,
             trainable: bool = True) -> tuple[Tensor, Tensor, Tensor, DecoderState, np.ndarray]:
        """One decoder step: returns (h, e, logits, new state, attention weights)."""
        h, e, _, state, w = self.step_hidden(g, enc, state, prev_ids, trainable)
        return h, e, self.output(g, h, trainable), state, w

    def teacher_forced(self, g: Graph, enc: EncoderOutput, inputs: np.ndarray,
                       trainable: bool = True) -> tuple[Tensor, DecoderTrace]:
        """Logits ``(L, B, V)`` for every position of the padded input matrix."""
        if inputs.size and (inputs.min() < 0 or inputs.max() >= self.vocab_size):
            raise ValueError("piece id outside the vocabulary")
        state = self.initial_state(g, enc, trainable)
        hs, es, ws = [], [], []
        for i in range(inputs.shape[1]):
            h, e, _, state, w = self.step_hidden(g, enc, state, inputs[:, i], trainable)
            hs.append(h)
            es.append(e)
            ws.append(w)
        logits = self.output(g, ops.stack(hs, axis=0), trainable)
        return logits, DecoderTrace(hs, es, ws)

    def step_hidden(self, g, enc, state, prev_ids, trainable=True):
        """Like :meth:`step` but leaves the output projection to the caller."""
        e = ops.embedding(g.param(self.embedding, trainable), prev_ids)
        x = ops.concat([e, state.context], axis=-1)
        hs, cs = [], []
        for layer, h, c in zip(self.decoder, state.h, state.c):
            h, c = layer.cell(g, x, h, c, trainable)
            hs.append(h)
            cs.append(c)
            x = h
        ctx, w = self.attention(g, x, enc.memory, trainable)
        return x, e, None, DecoderState(hs, cs, ctx), w


def las_loss(g: Graph, model: LAS, feats: list[np.ndarray], pieces: list[list[int]],
             smoothing: float, trainable: bool = True):
    """Label-smoothed cross-entropy summed over steps, averaged over the batch.

    Returns the loss, the decoder trace and the teacher-forcing arrays so a
    joint model can reuse the same pass."""
    enc = model.encode(g, feats, trainable)
    inp, out, mask = teacher_forcing_arrays(pieces)
    logits, trace = model.teacher_forced(g, enc, inp, trainable)
    L, B, V = logits.shape
    flat = ops.reshape(logits, (L * B, V))
    loss = ops.cross_entropy(flat, out.T.reshape(-1), smoothing, mask.T.reshape(-1) / B)
    return loss, trace, (inp, out, mask)


def las_encode(model: LAS, features: np.ndarray) -> EncoderOutput:
    """Encoder pass over one ``(T, D)`` utterance without recording gradients."""
    return model.encode(Graph(grad_enabled=False), [np.asarray(features, dtype=float)], trainable=False)


def attend(attention: MultiHeadAttention, query: np.ndarray, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Context vector and per-head weights ``(T, heads)`` for one query over one memory."""
    g = Graph(grad_enabled=False)
    z = np.asarray(z, dtype=float)
    mem = attention.memory(g, g.constant(z[None]), np.array([len(z)]), trainable=False)
    ctx, w = attention(g, g.constant(np.asarray(query, dtype=float)[None]), mem, trainable=False)
    return ctx.data[0], w[0]


def las_decode_teacher_forced(model: LAS, features: np.ndarray, pieces: list[int]
                              ) -> tuple[np.ndarray, DecoderTrace]:
    """Per-step logits ``(n + 1, V)`` for target ``pieces`` + EOS, and the trace."""
    g = Graph(grad_enabled=False)
    enc = model.encode(g, [np.asarray(features, dtype=float)], trainable=False)
    inp, _, _ = teacher_forcing_arrays([list(pieces)])
    logits, trace = model.teacher_forced(g, enc, inp, trainable=False)
    return logits.data[:, 0], trace
