"""Template grammar and the seeded synthetic corpus generator."""
from __future__ import annotations

import hashlib
import json
import os
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .annotation import OTHER, Interpretation, interpretation_from_tags
from .features import normalize, synthesize_features

PLACEHOLDER = re.compile(r"\{([^{}]*)\}")
CHARSET = set("abcdefghijklmnopqrstuvwxyz.' ")


class GrammarError(ValueError):
    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = problems


@dataclass
class Utterance:
    id: str
    transcript: str
    intent: str
    tags: list[str]
    features: np.ndarray | None = None

    @property
    def words(self) -> list[str]:
        return self.transcript.split()

    def interpretation(self) -> Interpretation:
        return interpretation_from_tags(self.words, self.tags, self.intent)


@dataclass
class Grammar:
    intents: list[str]
    templates: dict[str, list[str]]
    slots: dict[str, list[str]]
    ood_templates: dict[str, list[str]]

    @classmethod
    def from_dict(cls, d: dict) -> "Grammar":
        missing = [k for k in ("intents", "templates", "slots", "ood_templates") if k not in d]
        if missing:
            raise GrammarError([f"missing key {k!r}" for k in missing])
        g = cls(list(d["intents"]), {k: list(v) for k, v in d["templates"].items()},
                {k: list(v) for k, v in d["slots"].items()},
                {k: list(v) for k, v in d["ood_templates"].items()})
        problems = g.validate()
        if problems:
            raise GrammarError(problems)
        return g

    @classmethod
    def load(cls, path: str | os.PathLike) -> "Grammar":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    @classmethod
    def default(cls) -> "Grammar":
        text = resources.files("jointslu.corpus").joinpath("data/default_grammar.json").read_text(encoding="utf-8")
        return cls.from_dict(json.loads(text))

    def to_dict(self) -> dict:
        return {"intents": self.intents, "templates": self.templates, "slots": self.slots,
                "ood_templates": self.ood_templates}

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @property
    def ood_intents(self) -> list[str]:
        return sorted(self.ood_templates)

    @property
    def slot_names(self) -> list[str]:
        return sorted(self.slots)

    def validate(self) -> list[str]:
        problems = []
        if len(set(self.intents)) != len(self.intents):
            problems.append("duplicate intent names")
        for name, values in sorted(self.slots.items()):
            if name == OTHER or not name or "|" in name or " " in name:
                problems.append(f"slot {name!r}: invalid slot name")
            if not values:
                problems.append(f"slot {name!r}: empty value lexicon")
            for v in values:
                if not v.strip() or set(v) - CHARSET:
                    problems.append(f"slot {name!r}: value {v!r} has unsupported characters")
        for intent in self.intents:
            if not self.templates.get(intent):
                problems.append(f"intent {intent!r}: no templates")
        for intent in sorted(self.templates):
            if intent not in self.intents:
                problems.append(f"templates for undeclared intent {intent!r}")
        for intent in sorted(self.ood_templates):
            if intent in self.intents:
                problems.append(f"ood intent {intent!r} overlaps an in-domain intent")
        for group, table in (("template", self.templates), ("ood template", self.ood_templates)):
            for intent, temps in sorted(table.items()):
                for t in temps:
                    for slot in PLACEHOLDER.findall(t):
                        if slot not in self.slots:
                            problems.append(f"{group} {t!r} ({intent}): undeclared slot {slot!r}")
                    literal = PLACEHOLDER.sub("", t)
                    if set(literal) - CHARSET or "{" in literal or "}" in literal:
                        problems.append(f"{group} {t!r} ({intent}): unsupported characters")
                    if not t.split():
                        problems.append(f"{group} in {intent}: empty template")
        return problems


def expand(template: str, grammar: Grammar, rng: np.random.Generator) -> tuple[list[str], list[str]]:
    """Fill placeholders from the lexicons; returns words and their tags."""
    words, tags = [], []
    for token in template.split():
        m = PLACEHOLDER.fullmatch(token)
        if m is None:
            words.append(token)
            tags.append(OTHER)
            continue
        name = m.group(1)
        values = grammar.slots[name]
        value = values[int(rng.integers(len(values)))]
        for w in value.split():
            words.append(w)
            tags.append(name)
    return words, tags


def generate_corpus(grammar: Grammar, n_utterances: int, seed: int, ood_fraction: float = 0.0,
                    id_prefix: str = "utt") -> list[Utterance]:
    """Seeded corpus: templates drawn uniformly from the pooled in-domain list
    (or, with probability ``ood_fraction``, from the out-of-domain list)."""
    if n_utterances < 1:
        raise ValueError("n_utterances must be at least 1")
    problems = grammar.validate()
    if problems:
        raise GrammarError(problems)
    pool = [(intent, t) for intent in grammar.intents for t in grammar.templates[intent]]
    ood_pool = [(intent, t) for intent in grammar.ood_intents for t in grammar.ood_templates[intent]]
    if ood_fraction > 0 and not ood_pool:
        raise GrammarError(["ood_fraction > 0 but the grammar has no ood templates"])
    rng = np.random.default_rng(seed)
    utts = []
    for k in range(n_utterances):
        use_ood = ood_fraction > 0 and rng.random() < ood_fraction
        source = ood_pool if use_ood else pool
        intent, template = source[int(rng.integers(len(source)))]
        words, tags = expand(template, grammar, rng)
        transcript = " ".join(words)
        feats = synthesize_features(transcript, [seed, k])
        utts.append(Utterance(f"{id_prefix}{k:05d}", transcript, intent, tags, feats))
    for u, f in zip(utts, normalize([u.features for u in utts])):
        u.features = f
    return utts


def split_corpus(utts: list[Utterance], fractions=(0.8, 0.1, 0.1)) -> tuple[list[Utterance], ...]:
    """Deterministic split by ranking utterance ids on their SHA-256 digest."""
    ranked = sorted(utts, key=lambda u: hashlib.sha256(u.id.encode("utf-8")).hexdigest())
    n = len(ranked)
    cuts = np.round(np.cumsum(fractions)[:-1] * n).astype(int)
    parts = np.split(np.arange(n), cuts)
    return tuple(sorted((ranked[i] for i in p), key=lambda u: u.id) for p in parts)
