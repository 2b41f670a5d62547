"""A trained model together with everything needed to run it, and its
checkpoint round trip."""
from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field

import numpy as np

from ..autodiff import CheckpointError, load_checkpoint, save_checkpoint
from ..config import ModelConfig
from ..tokenizer import SubwordVocab
from .a2i import AudioToIntent
from .joint import JointSLU
from .las import LAS
from .nlu import NLU

KINDS = ("a2i", "las", "nlu", "joint")


@dataclass
class Bundle:
    kind: str
    model: object
    cfg: ModelConfig
    vocab: SubwordVocab | None = None
    intents: list[str] = field(default_factory=list)
    tags: list[str] = field(default_factory=list)

    @property
    def params(self):
        return self.model.params


def build(kind: str, cfg: ModelConfig, vocab: SubwordVocab | None = None,
          intents: list[str] = (), tags: list[str] = ()) -> Bundle:
    """Freshly initialised model; the initial weights depend only on ``cfg.init_seed``."""
    rng = np.random.default_rng(cfg.init_seed)
    if kind == "a2i":
        model = AudioToIntent(cfg, len(intents), rng)
    elif kind == "las":
        model = LAS(cfg, len(vocab), rng)
    elif kind == "nlu":
        model = NLU(cfg, len(intents), len(tags), rng, vocab_size=len(vocab))
    elif kind == "joint":
        model = JointSLU(cfg, len(vocab), len(intents), len(tags), rng)
    else:
        raise ValueError(f"unknown model kind {kind!r}; expected one of {', '.join(KINDS)}")
    return Bundle(kind, model, cfg, vocab, list(intents), list(tags))


def save(path: str | os.PathLike, bundle: Bundle) -> None:
    meta = {
        "kind": bundle.kind,
        "config": dataclasses.asdict(bundle.cfg),
        "vocab": bundle.vocab.dumps() if bundle.vocab is not None else None,
        "intents": bundle.intents,
        "tags": bundle.tags,
    }
    save_checkpoint(path, bundle.params.state(), meta)


def load(path: str | os.PathLike, expect: str | None = None) -> Bundle:
    arrays, meta = load_checkpoint(path)
    if not meta or meta.get("kind") not in KINDS:
        raise CheckpointError(f"{path}: checkpoint carries no model kind")
    if expect is not None and meta["kind"] != expect:
        raise CheckpointError(f"{path}: expected a {expect} checkpoint, found {meta['kind']}")
    cfg = ModelConfig(**meta["config"])
    vocab = SubwordVocab.loads(meta["vocab"]) if meta.get("vocab") else None
    bundle = build(meta["kind"], cfg, vocab, meta.get("intents", []), meta.get("tags", []))
    bundle.params.load_state(arrays)
    return bundle
