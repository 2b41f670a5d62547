"""Word-level slot annotations and the (intent, slots) interpretation."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from ..tokenizer import Segmentation, SubwordVocab, segment_viterbi, word_begins

OTHER = "Other"


class AnnotationError(ValueError):
    pass


@dataclass(frozen=True)
class Interpretation:
    intent: str
    slots: tuple[tuple[str, str], ...] = field(default_factory=tuple)

    def format_slots(self) -> str:
        return ";".join(f"{name}={value}" for name, value in self.slots)

    @staticmethod
    def parse_slots(text: str) -> tuple[tuple[str, str], ...]:
        if not text:
            return ()
        out = []
        for item in text.split(";"):
            name, sep, value = item.partition("=")
            if not sep or not name or not value:
                raise AnnotationError(f"bad slot item {item!r}")
            out.append((name, value))
        return tuple(out)


def parse_annotation(line: str) -> tuple[list[str], list[str]]:
    """Split ``word|Tag word|Tag ...`` into parallel word and tag lists."""
    words, tags = [], []
    for pos, token in enumerate(line.split(), 1):
        word, sep, tag = token.rpartition("|")
        if not sep:
            raise AnnotationError(f"token {pos} ({token!r}): missing '|'")
        if not word or not tag or "|" in word:
            raise AnnotationError(f"token {pos} ({token!r}): empty or malformed word/tag")
        words.append(word)
        tags.append(tag)
    return words, tags


def format_annotation(words: Sequence[str], tags: Sequence[str]) -> str:
    if len(words) != len(tags):
        raise AnnotationError(f"{len(words)} words but {len(tags)} tags")
    return " ".join(f"{w}|{t}" for w, t in zip(words, tags))


def interpretation_from_tags(words: Sequence[str], tags: Sequence[str], intent: str) -> Interpretation:
    """Merge maximal runs of consecutive words sharing a non-Other tag into slots."""
    if len(words) != len(tags):
        raise AnnotationError(f"{len(words)} words but {len(tags)} tags")
    slots: list[tuple[str, str]] = []
    run: list[str] = []
    run_tag = None
    for w, t in zip(words, tags):
        if t == run_tag and t != OTHER:
            run.append(w)
            continue
        if run:
            slots.append((run_tag, " ".join(run)))
        run, run_tag = ([w], t) if t != OTHER else ([], None)
    if run:
        slots.append((run_tag, " ".join(run)))
    return Interpretation(intent, tuple(slots))


def project_tags_to_subwords(words: Sequence[str], tags: Sequence[str], vocab: SubwordVocab,
                             segmentation: Segmentation | None = None) -> tuple[list[int], list[str]]:
    """Tag every piece of a word with that word's tag.

    ``segmentation`` defaults to the Viterbi one; training may pass a sampled one.
    """
    if len(words) != len(tags):
        raise AnnotationError(f"{len(words)} words but {len(tags)} tags")
    seg = segmentation or segment_viterbi(" ".join(words), vocab)
    piece_tags: list[str] = []
    k = -1
    for begin in seg.word_begin:
        k += begin
        piece_tags.append(tags[k])
    if k != len(words) - 1:
        raise AnnotationError("segmentation does not cover the words")
    return list(seg.ids), piece_tags


def recover_word_tags(pieces: Sequence[int], piece_tags: Sequence[str], vocab: SubwordVocab) -> list[str]:
    """Each word takes the tag of its last piece."""
    if len(pieces) != len(piece_tags):
        raise AnnotationError(f"{len(pieces)} pieces but {len(piece_tags)} tags")
    out: list[str] = []
    for begin, tag in zip(word_begins(pieces, vocab), piece_tags):
        if begin:
            out.append(tag)
        else:
            out[-1] = tag
    return out
