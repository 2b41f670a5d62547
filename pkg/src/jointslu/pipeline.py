"""Decoding whole corpora into n-best rows."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence

import numpy as np

from .corpus.annotation import Interpretation
from .corpus.grammar import Utterance
from .models import a2i, beam_decode, compose, joint_forward, nlu_predict
from .models.nbest import NbestRow
from .models.store import Bundle
from .tokenizer import detokenize, encode

NO_INTENT = "-"


def map_utterances(fn: Callable, items: Sequence, threads: int) -> list:
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def decode_utterance(u: Utterance, model: Bundle, beam: int = 4, nlu: Bundle | None = None) -> list[NbestRow]:
    """n-best rows for one utterance.

    ``a2i`` yields one row with an empty transcript; ``las`` alone yields
    transcripts with intent ``-``; ``las`` plus ``nlu`` is the compositional
    pipeline; ``nlu`` alone interprets the reference transcript."""
    if model.kind == "a2i":
        probs = np.exp(a2i.audio_to_intent_forward(model.model, u.features))
        probs /= probs.sum()
        k = int(np.argmax(probs))
        return [NbestRow(u.id, 1, float(np.log(probs[k])), "", Interpretation(model.intents[k]))]
    if model.kind == "nlu":
        text = " ".join(u.words)
        _, interp, probs = nlu_predict(model.model, encode(text, model.vocab), model.vocab,
                                       model.intents, model.tags)
        return [NbestRow(u.id, 1, float(np.log(probs.max())), text, interp)]
    if model.kind == "las" and nlu is None:
        hyps = beam_decode(model.model, u.features, beam)
        return [NbestRow(u.id, r, h.score, detokenize(h.text_pieces, model.vocab), Interpretation(NO_INTENT))
                for r, h in enumerate(hyps, 1)]
    if model.kind == "las":
        decoded = compose(u.features, model, nlu, beam)
    elif model.kind == "joint":
        decoded = joint_forward(u.features, model, beam)
    else:
        raise ValueError(f"cannot decode with a {model.kind} model")
    return [NbestRow(u.id, r, d.score, d.transcript, d.interpretation) for r, d in enumerate(decoded, 1)]


def decode_corpus(utts: Sequence[Utterance], model: Bundle, beam: int = 4, nlu: Bundle | None = None,
                  threads: int = 1) -> list[NbestRow]:
    """Rows for every utterance in corpus order; threads only change speed."""
    if nlu is not None and (model.kind != "las" or nlu.kind != "nlu"):
        raise ValueError("the compositional pipeline pairs a las model with an nlu model")
    per_utt = map_utterances(lambda u: decode_utterance(u, model, beam, nlu), list(utts), threads)
    return [row for rows in per_utt for row in rows]


def group(rows: Sequence[NbestRow]) -> dict[str, list[NbestRow]]:
    out: dict[str, list[NbestRow]] = {}
    for r in rows:
        out.setdefault(r.id, []).append(r)
    return out
