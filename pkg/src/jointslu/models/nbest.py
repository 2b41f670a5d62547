"""N-best output files: one TSV row per hypothesis.

Columns: utterance id, rank (1 = best), length-normalized score, transcript,
intent, slots serialized as ``Name=value;Name=value``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from ..corpus.annotation import AnnotationError, Interpretation

HEADER = "id\trank\tscore\ttranscript\tintent\tslots"


class NbestFormatError(ValueError):
    pass


@dataclass(frozen=True)
class NbestRow:
    id: str
    rank: int
    score: float
    transcript: str
    interpretation: Interpretation


def format_row(row: NbestRow) -> str:
    for text in (row.id, row.transcript, row.interpretation.intent, row.interpretation.format_slots()):
        if "\t" in text or "\n" in text:
            raise NbestFormatError(f"{row.id}: fields may not contain tabs or newlines")
    return "\t".join([row.id, str(row.rank), repr(float(row.score)), row.transcript,
                      row.interpretation.intent, row.interpretation.format_slots()])


def dumps(rows: list[NbestRow]) -> str:
    return HEADER + "\n" + "".join(format_row(r) + "\n" for r in rows)


def loads(text: str) -> dict[str, list[NbestRow]]:
    """Rows grouped by id and ordered by rank; ranks must run 1..n per id."""
    groups: dict[str, list[NbestRow]] = {}
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip() or (n == 1 and line == HEADER):
            continue
        parts = line.split("\t")
        if len(parts) != 6:
            raise NbestFormatError(f"line {n}: expected 6 tab-separated fields, got {len(parts)}")
        uid, rank, score, transcript, intent, slots = parts
        try:
            rank_i = int(rank)
            score_f = float(score)
        except ValueError:
            raise NbestFormatError(f"line {n}: rank must be an integer and score a number") from None
        if not uid or rank_i < 1 or not intent or math.isnan(score_f):
            raise NbestFormatError(f"line {n}: empty id/intent, rank < 1 or NaN score")
        try:
            interp = Interpretation(intent, Interpretation.parse_slots(slots))
        except AnnotationError as exc:
            raise NbestFormatError(f"line {n}: {exc}") from None
        rows = groups.setdefault(uid, [])
        if rank_i != len(rows) + 1:
            raise NbestFormatError(f"line {n}: rank {rank_i} for {uid} out of sequence")
        rows.append(NbestRow(uid, rank_i, score_f, transcript, interp))
    return groups
