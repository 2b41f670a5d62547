"""Beam search over piece log-probabilities with a per-hypothesis (h, e) trace."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from ..autodiff import Graph, Tensor
from ..tokenizer import EOS, PAD, SOS, UNK
from .las import LAS, DecoderState, EncoderOutput

BANNED = (PAD, SOS, UNK)


@dataclass
class Hypothesis:
    pieces: list[int]       # EOS-terminated
    logprob: float
    h: list[np.ndarray] = field(default_factory=list)
    e: list[np.ndarray] = field(default_factory=list)

    @property
    def score(self) -> float:
        return self.logprob / len(self.pieces)

    @property
    def text_pieces(self) -> list[int]:
        return self.pieces[:-1] if self.pieces and self.pieces[-1] == EOS else list(self.pieces)


class Scorer(Protocol):
    """What beam search needs from a model.

    ``step`` takes a state for K live hypotheses and their last pieces and
    returns ``(logp (K, V), h (K, H), e (K, E), new_state)``; ``select``
    reorders/duplicates a state's rows."""

    def initial(self): ...
    def step(self, state, prev: np.ndarray): ...
    def select(self, state, rows: np.ndarray): ...


def _mask(logp: np.ndarray, banned: Sequence[int], force_eos: bool) -> np.ndarray:
    logp = logp.copy()
    if force_eos:
        keep = logp[:, EOS].copy()
        logp[:] = -np.inf
        logp[:, EOS] = keep
    else:
        logp[:, list(banned)] = -np.inf
    return logp


def beam_search(scorer: Scorer, beam_width: int, max_len: int,
                banned: Sequence[int] = BANNED) -> list[Hypothesis]:
    """Up to ``beam_width`` finished hypotheses, best length-normalized score first.

    Candidates are ranked by cumulative log-prob with a stable sort, so ties go
    to the earlier hypothesis and the smaller piece id; EOS is forced at the
    last step so the result is never empty."""
    if beam_width < 1:
        raise ValueError("beam_width must be at least 1")
    if max_len < 1:
        raise ValueError("max_len must be at least 1")
    state = scorer.initial()
    alive = [Hypothesis([], 0.0)]
    prev = np.array([SOS])
    finished: list[Hypothesis] = []
    for t in range(max_len):
        logp, h, e, state = scorer.step(state, prev)
        logp = _mask(logp, banned, t == max_len - 1)
        V = logp.shape[1]
        total = np.array([hyp.logprob for hyp in alive])[:, None] + logp
        flat = total.ravel()
        order = np.argsort(-flat, kind="stable")
        rows, nxt, new_alive = [], [], []
        for rank, idx in enumerate(order):
            if not np.isfinite(flat[idx]) or len(new_alive) == beam_width:
                break
            r, piece = divmod(int(idx), V)
            parent = alive[r]
            if piece == EOS:
                # an ending that is not among the step's top candidates would
                # fill the finished list with weak short hypotheses
                if rank >= beam_width:
                    continue
                # finished hypotheses own their trace; live ones share prefixes
                finished.append(Hypothesis(parent.pieces + [piece], float(flat[idx]),
                                           [a.copy() for a in parent.h] + [h[r].copy()],
                                           [a.copy() for a in parent.e] + [e[r].copy()]))
            else:
                hyp = Hypothesis(parent.pieces + [piece], float(flat[idx]),
                                 parent.h + [h[r].copy()], parent.e + [e[r].copy()])
                new_alive.append(hyp)
                rows.append(r)
                nxt.append(piece)
        if not new_alive:
            break
        # extensions only lose log-prob, so stop once no live prefix is ahead
        # of the best ending found so far
        if len(finished) >= beam_width and \
                max(hyp.logprob for hyp in new_alive) <= max(hyp.logprob for hyp in finished):
            break
        alive = new_alive
        state = scorer.select(state, np.array(rows))
        prev = np.array(nxt)
    finished.sort(key=lambda hyp: -hyp.score)
    return finished[:beam_width]


def greedy_decode(scorer: Scorer, max_len: int, banned: Sequence[int] = BANNED) -> list[int]:
    """Argmax piece at every step until EOS (forced at ``max_len``)."""
    state = scorer.initial()
    prev = np.array([SOS])
    out: list[int] = []
    for t in range(max_len):
        logp, _, _, state = scorer.step(state, prev)
        piece = int(np.argmax(_mask(logp, banned, t == max_len - 1)[0]))
        out.append(piece)
        if piece == EOS:
            break
        prev = np.array([piece])
    return out


class LASScorer:
    """Decoder steps of a trained :class:`LAS` on one encoded utterance."""

    def __init__(self, model: LAS, features: np.ndarray):
        self.model = model
        self.g = Graph(grad_enabled=False)
        self.enc = model.encode(self.g, [np.asarray(features, dtype=float)], trainable=False)
        self._tiled: dict[int, EncoderOutput] = {1: self.enc}

    def _enc(self, k: int) -> EncoderOutput:
        if k not in self._tiled:
            m = self.enc.memory
            rep = lambda t: Tensor(np.repeat(t.data, k, axis=0), self.g)  # noqa: E731
            mem = type(m)(rep(m.keys), rep(m.values), np.repeat(m.mask, k, axis=0),
                          np.repeat(m.lengths, k))
            self._tiled[k] = EncoderOutput(rep(self.enc.z), mem.lengths, mem)
        return self._tiled[k]

    def initial(self) -> DecoderState:
        return self.model.initial_state(self.g, self.enc, trainable=False)

    def step(self, state: DecoderState, prev: np.ndarray):
        enc = self._enc(len(prev))
        h, e, logits, state, _ = self.model.step(self.g, enc, state, prev, trainable=False)
        z = logits.data - logits.data.max(axis=1, keepdims=True)
        logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        return logp, h.data, e.data, state

    def select(self, state: DecoderState, rows: np.ndarray) -> DecoderState:
        pick = lambda t: None if t is None else Tensor(t.data[rows], self.g)  # noqa: E731
        return DecoderState([pick(h) for h in state.h], [pick(c) for c in state.c], pick(state.context))


def default_max_len(n_frames: int) -> int:
    return 2 * n_frames + 10


def beam_decode(model: LAS, features: np.ndarray, beam_width: int = 4,
                max_len: int | None = None) -> list[Hypothesis]:
    scorer = LASScorer(model, features)
    return beam_search(scorer, beam_width, max_len or default_max_len(len(features)))


def las_greedy(model: LAS, features: np.ndarray, max_len: int | None = None) -> list[int]:
    scorer = LASScorer(model, features)
    return greedy_decode(scorer, max_len or default_max_len(len(features)))
