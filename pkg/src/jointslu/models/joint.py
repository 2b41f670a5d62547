"""Joint SLU: a recognizer whose per-step (h_i, e_i) trace feeds the NLU,
the compositional text pipeline it is compared against, and the
out-of-domain filter built from two joint models."""
from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np

from ..autodiff import Graph, Params, Tensor, ops
from ..config import ModelConfig, TrainConfig
from ..corpus.annotation import Interpretation, interpretation_from_tags, recover_word_tags
from ..tokenizer import MARKER, SubwordVocab, detokenize, encode, word_begins
from .beam import Hypothesis, beam_decode
from .las import LAS, las_loss
from .nlu import NLU, interface_inputs, nlu_loss

if TYPE_CHECKING:
    from .store import Bundle


class JointSLU:
    def __init__(self, cfg: ModelConfig, vocab_size: int, n_intents: int, n_tags: int,
                 rng: np.random.Generator):
        self.cfg = cfg
        self.params = Params()
        self.las = LAS(cfg, vocab_size, rng, self.params, prefix="asr")
        self.nlu = NLU(cfg, n_intents, n_tags, rng, interface_dim=cfg.dec_hidden + cfg.emb_dim,
                       params=self.params, prefix="nlu")

    def asr_params(self):
        return self.params.subset("asr.")

    def nlu_params(self):
        return self.params.subset("nlu.")


def joint_loss(g: Graph, model: JointSLU, feats: list[np.ndarray], pieces: list[list[int]],
               tags: list[list[int]], intents: np.ndarray, tcfg: TrainConfig,
               asr_trainable: bool = True) -> tuple[Tensor, dict[str, float]]:
    """``w_subword * subword CE + w_intent * intent CE + w_slot * slot CE``.

    The NLU reads trace steps 1..n: step s consumed piece s-1 of the
    teacher-forced target, so positions line up with the piece tags."""
    sw, trace, _ = las_loss(g, model.las, feats, pieces, tcfg.smoothing, trainable=asr_trainable)
    lengths = np.array([len(p) for p in pieces])
    if lengths.max() > 0:
        xs = interface_inputs(g, trace.h[1:], trace.e[1:])
    else:
        xs = g.constant(np.zeros((len(pieces), 0, model.nlu.d_in)))
    intent_logits, slot_logits = model.nlu.forward(g, xs, lengths)
    il, sl = nlu_loss(g, intent_logits, slot_logits, lengths, intents, tags)
    total = ops.add(ops.add(ops.mul(sw, tcfg.w_subword), ops.mul(il, tcfg.w_intent)),
                    ops.mul(sl, tcfg.w_slot))
    return total, {"subword": sw.item(), "intent": il.item(), "slot": sl.item()}


@dataclass
class Decoded:
    """One hypothesis with its interpretation; ``intent_probs`` is over the model's intents."""
    pieces: list[int]
    score: float
    transcript: str
    interpretation: Interpretation
    intent_probs: np.ndarray


def _softmax(x: np.ndarray) -> np.ndarray:
    z = np.exp(x - x.max(axis=-1, keepdims=True))
    return z / z.sum(axis=-1, keepdims=True)


def _interpret(pieces: list[int], intent_logits: np.ndarray, slot_logits: np.ndarray,
               vocab: SubwordVocab, intents: Sequence[str], tags: Sequence[str]
               ) -> tuple[str, Interpretation, np.ndarray]:
    probs = _softmax(intent_logits)
    intent = intents[int(np.argmax(probs))]
    piece_tags = [tags[int(k)] for k in np.argmax(slot_logits, axis=-1)] if len(pieces) else []
    word_tags = recover_word_tags(pieces, piece_tags, vocab)
    # a decoded bare marker piece makes an empty word; it carries no text and is dropped
    spans = []
    for pid, begin in zip(pieces, word_begins(pieces, vocab)):
        text = vocab.pieces[pid].replace(MARKER, "")
        if begin:
            spans.append(text)
        else:
            spans[-1] += text
    kept = [(w, t) for w, t in zip(spans, word_tags) if w]
    words = [w for w, _ in kept]
    interp = interpretation_from_tags(words, [t for _, t in kept], intent)
    return " ".join(words), interp, probs


def nlu_predict(nlu: NLU, pieces: list[int], vocab: SubwordVocab, intents: Sequence[str],
                tags: Sequence[str]) -> tuple[str, Interpretation, np.ndarray]:
    """Compositional NLU on piece ids."""
    g = Graph(grad_enabled=False)
    xs, lengths = nlu.inputs_from_pieces(g, [pieces], trainable=False)
    il, sl = nlu.forward(g, xs, lengths, trainable=False)
    return _interpret(list(pieces), il.data[0], sl.data[0], vocab, intents, tags)


def nlu_on_trace(nlu: NLU, hyp: Hypothesis, vocab: SubwordVocab, intents: Sequence[str],
                 tags: Sequence[str], zero_h: bool = False) -> tuple[str, Interpretation, np.ndarray]:
    """Joint NLU on one hypothesis's own trace; other hypotheses are never read."""
    g = Graph(grad_enabled=False)
    pieces = hyp.text_pieces
    n = len(pieces)
    if n:
        hs = [g.constant(hyp.h[s][None]) for s in range(1, n + 1)]
        es = [g.constant(hyp.e[s][None]) for s in range(1, n + 1)]
        xs = interface_inputs(g, hs, es, zero_h=zero_h)
    else:
        xs = g.constant(np.zeros((1, 0, nlu.d_in)))
    il, sl = nlu.forward(g, xs, np.array([n]), trainable=False)
    return _interpret(pieces, il.data[0], sl.data[0], vocab, intents, tags)


def compose(features: np.ndarray, asr: "Bundle", nlu: "Bundle", beam_width: int = 4) -> list[Decoded]:
    """Recognize, detokenize, re-segment with Viterbi, then run the text NLU.
    Every hypothesis of the n-best list is interpreted; the first is the 1-best."""
    out = []
    for hyp in beam_decode(asr.model, features, beam_width):
        text = detokenize(hyp.text_pieces, asr.vocab)
        pieces = encode(text, nlu.vocab)
        _, interp, probs = nlu_predict(nlu.model, pieces, nlu.vocab, nlu.intents, nlu.tags)
        out.append(Decoded(hyp.text_pieces, hyp.score, text, interp, probs))
    return out


def joint_forward(features: np.ndarray, joint: "Bundle", beam_width: int = 4) -> list[Decoded]:
    """Beam decode, then interpret each hypothesis from its own (h, e) trace."""
    out = []
    for hyp in beam_decode(joint.model.las, features, beam_width):
        text, interp, probs = nlu_on_trace(joint.model.nlu, hyp, joint.vocab, joint.intents, joint.tags)
        out.append(Decoded(hyp.text_pieces, hyp.score, text, interp, probs))
    return out


OOD = "OOD"


def ood_score(wide_best: Decoded, wide_intents: Sequence[str], in_domain: Sequence[str]
              ) -> tuple[bool, float]:
    """Whether the wide model's intent is in-domain, and its largest in-domain probability."""
    keep = set(in_domain)
    pred = wide_intents[int(np.argmax(wide_best.intent_probs))]
    idx = [k for k, name in enumerate(wide_intents) if name in keep]
    top = float(wide_best.intent_probs[idx].max()) if idx else 0.0
    return pred in keep, top


def ood_verdict(in_domain_pred: bool, top_prob: float, threshold: float) -> bool:
    """True means out-of-domain.  ``<=`` makes threshold 1.0 reject everything."""
    return (not in_domain_pred) or top_prob <= threshold


def ood_filter(features: np.ndarray, wide: "Bundle", narrow: "Bundle", in_domain: Sequence[str],
               threshold: float, beam_width: int = 4) -> Interpretation | str:
    """The narrow model's interpretation, or :data:`OOD`."""
    best = joint_forward(features, wide, beam_width)[0]
    if ood_verdict(*ood_score(best, wide.intents, in_domain), threshold):
        return OOD
    return joint_forward(features, narrow, beam_width)[0].interpretation


def false_accept_curve(scores: list[tuple[bool, float]], thresholds: Sequence[float]) -> list[float]:
    """Fraction of (out-of-domain) utterances accepted at each threshold."""
    if not scores:
        raise ValueError("no utterances to sweep")
    return [sum(not ood_verdict(ok, p, t) for ok, p in scores) / len(scores) for t in thresholds]
