"""Corpus TSV and binary features files."""
from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

from .annotation import AnnotationError, format_annotation, parse_annotation
from .grammar import Utterance

FEATURES_MAGIC = b"SLUFEA1\n"


class CorpusFormatError(ValueError):
    pass


def dumps_corpus(utts: list[Utterance]) -> str:
    return "".join(f"{u.id}\t{u.transcript}\t{u.intent}\t{format_annotation(u.words, u.tags)}\n" for u in utts)


def _parse_line(n: int, line: str) -> Utterance:
    fields = line.split("\t")
    if len(fields) != 4:
        raise CorpusFormatError(f"line {n}: expected 4 tab-separated fields, got {len(fields)}")
    uid, transcript, intent, annotation = fields
    if not uid or not intent:
        raise CorpusFormatError(f"line {n}: empty id or intent")
    try:
        words, tags = parse_annotation(annotation)
    except AnnotationError as exc:
        raise CorpusFormatError(f"line {n}: {exc}") from exc
    if words != transcript.split():
        raise CorpusFormatError(f"line {n}: annotation words ({len(words)}) do not match "
                                f"transcript words ({len(transcript.split())})")
    return Utterance(uid, transcript, intent, tags)


def corpus_problems(text: str) -> list[str]:
    """Every malformed line, plus repeated ids."""
    problems, seen = [], set()
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            u = _parse_line(n, line)
        except CorpusFormatError as exc:
            problems.append(str(exc))
            continue
        if u.id in seen:
            problems.append(f"line {n}: duplicate id {u.id!r}")
        seen.add(u.id)
    return problems


def loads_corpus(text: str) -> list[Utterance]:
    return [_parse_line(n, line) for n, line in enumerate(text.splitlines(), 1) if line.strip()]


def dumps_features(utts: list[Utterance]) -> bytes:
    out = [FEATURES_MAGIC, struct.pack("<I", len(utts))]
    for u in utts:
        uid = u.id.encode("utf-8")
        f = np.ascontiguousarray(u.features, dtype="<f4")
        out.append(struct.pack("<I", len(uid)) + uid + struct.pack("<II", *f.shape) + f.tobytes())
    return b"".join(out)


def loads_features(blob: bytes) -> dict[str, np.ndarray]:
    if not blob.startswith(FEATURES_MAGIC):
        raise CorpusFormatError("not a features file: bad magic")
    pos = len(FEATURES_MAGIC)
    (count,) = struct.unpack_from("<I", blob, pos)
    pos += 4
    feats = {}
    for _ in range(count):
        (n,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        uid = blob[pos:pos + n].decode("utf-8")
        pos += n
        T, D = struct.unpack_from("<II", blob, pos)
        pos += 8
        a = np.frombuffer(blob, dtype="<f4", count=T * D, offset=pos).reshape(T, D)
        pos += 4 * T * D
        feats[uid] = a.astype(np.float64)
    if pos != len(blob):
        raise CorpusFormatError("trailing bytes after last utterance")
    return feats


def save_corpus(stem: str | os.PathLike, utts: list[Utterance]) -> None:
    """Writes ``<stem>.tsv`` and, when features are present, ``<stem>.feats``."""
    stem = Path(stem)
    stem.with_suffix(".tsv").write_text(dumps_corpus(utts), encoding="utf-8")
    if utts and all(u.features is not None for u in utts):
        stem.with_suffix(".feats").write_bytes(dumps_features(utts))


def load_corpus(stem: str | os.PathLike) -> list[Utterance]:
    stem = Path(stem)
    utts = loads_corpus(stem.with_suffix(".tsv").read_text(encoding="utf-8"))
    fpath = stem.with_suffix(".feats")
    if fpath.exists():
        feats = loads_features(fpath.read_bytes())
        for u in utts:
            if u.id not in feats:
                raise CorpusFormatError(f"{u.id}: no features in {fpath}")
            u.features = feats[u.id]
    return utts
