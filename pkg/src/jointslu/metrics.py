"""Word error rate, intent error rate, semantic error rate, interpretation
error rate, n-best oracles, and file-level evaluation."""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

from .corpus.annotation import Interpretation
from .corpus.grammar import Utterance
from .models.nbest import NbestRow


@dataclass(frozen=True)
class EditStats:
    substitutions: int
    insertions: int
    deletions: int
    correct: int
    ref_len: int

    @property
    def errors(self) -> int:
        return self.substitutions + self.insertions + self.deletions


def edit_stats(ref: Sequence[str], hyp: Sequence[str]) -> EditStats:
    """Unit-cost alignment; the backtrace prefers substitution, then insertion,
    then deletion among equally cheap moves.  An empty reference is allowed here."""
    n, m = len(ref), len(hyp)
    d = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n + 1):
        d[i][0] = i
    for j in range(m + 1):
        d[0][j] = j
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            diag = d[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1])
            d[i][j] = min(diag, d[i][j - 1] + 1, d[i - 1][j] + 1)
    s = ins = dele = c = 0
    i, j = n, m
    while i or j:
        if i and j and d[i][j] == d[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1]):
            if ref[i - 1] == hyp[j - 1]:
                c += 1
            else:
                s += 1
            i, j = i - 1, j - 1
        elif j and d[i][j] == d[i][j - 1] + 1:
            ins += 1
            j -= 1
        else:
            dele += 1
            i -= 1
    return EditStats(s, ins, dele, c, n)


def wer(ref: Sequence[str], hyp: Sequence[str]) -> tuple[EditStats, float]:
    if not ref:
        raise ValueError("word error rate is undefined for an empty reference")
    st = edit_stats(ref, hyp)
    return st, st.errors / st.ref_len


def icer(pairs: Iterable[tuple[str, str]]) -> float:
    """Fraction of (reference, predicted) intent pairs that disagree."""
    pairs = list(pairs)
    if not pairs:
        raise ValueError("intent error rate of an empty set")
    return sum(r != p for r, p in pairs) / len(pairs)


def intent_recall(pairs: Iterable[tuple[str, str]]) -> dict[str, dict]:
    """Per reference intent: count, correct, recall."""
    total: Counter = Counter()
    right: Counter = Counter()
    for r, p in pairs:
        total[r] += 1
        right[r] += r == p
    return {k: {"count": total[k], "correct": right[k], "recall": right[k] / total[k]} for k in sorted(total)}


def icer_macro(pairs: Iterable[tuple[str, str]]) -> float:
    table = intent_recall(pairs)
    if not table:
        raise ValueError("intent error rate of an empty set")
    return sum(1.0 - row["recall"] for row in table.values()) / len(table)


@dataclass(frozen=True)
class SemanticStats:
    correct: int
    deletion: int
    insertion: int
    substitution: int

    @property
    def errors(self) -> int:
        return self.deletion + self.insertion + self.substitution

    @property
    def denominator(self) -> int:
        return self.correct + self.deletion + self.substitution

    @property
    def rate(self) -> float:
        return self.errors / self.denominator


def _norm(value: str) -> str:
    return " ".join(value.split())


def semer(ref: Interpretation, hyp: Interpretation) -> SemanticStats:
    """Intent as one unit plus multiset slot matching: exact pairs are correct,
    leftover pairs sharing a name are substitutions, the rest are deletions
    (reference side) or insertions (hypothesis side)."""
    r = Counter((n, _norm(v)) for n, v in ref.slots)
    h = Counter((n, _norm(v)) for n, v in hyp.slots)
    exact = r & h
    r_left = Counter({n: 0 for n, _ in r})
    for (n, _), k in (r - exact).items():
        r_left[n] += k
    h_left: Counter = Counter()
    for (n, _), k in (h - exact).items():
        h_left[n] += k
    subs = sum(min(k, h_left[n]) for n, k in r_left.items())
    dele = sum(r_left.values()) - subs
    ins = sum(h_left.values()) - subs
    c = sum(exact.values())
    if ref.intent == hyp.intent:
        c += 1
    else:
        subs += 1
    return SemanticStats(c, dele, ins, subs)


def semer_rate(stats: Iterable[SemanticStats]) -> float:
    stats = list(stats)
    if not stats:
        raise ValueError("semantic error rate of an empty set")
    return sum(s.errors for s in stats) / sum(s.denominator for s in stats)


def irer(stats: Iterable[SemanticStats]) -> float:
    stats = list(stats)
    if not stats:
        raise ValueError("interpretation error rate of an empty set")
    return sum(s.errors > 0 for s in stats) / len(stats)


@dataclass(frozen=True)
class Hyp:
    transcript: str
    interpretation: Interpretation


def nbest_oracle(nbest: Sequence[Sequence[Hyp]], refs: Sequence[Utterance]) -> dict:
    """WER and SemER oracles, each picking per utterance the hypothesis that
    minimizes its own metric, next to the 1-best values."""
    if len(nbest) != len(refs):
        raise ValueError("one n-best list per reference utterance")
    out = {"utterances": len(refs)}
    best_w = one_w = best_s = one_s = 0
    ref_words = denom = 0
    best_any = one_any = 0
    for hyps, ref in zip(nbest, refs):
        if not hyps:
            raise ValueError(f"{ref.id}: empty n-best list")
        words = ref.transcript.split()
        w_err = [edit_stats(words, h.transcript.split()).errors for h in hyps]
        s_st = [semer(ref.interpretation(), h.interpretation) for h in hyps]
        best_w += min(w_err)
        one_w += w_err[0]
        best_s += min(s.errors for s in s_st)
        one_s += s_st[0].errors
        best_any += min(s.errors for s in s_st) > 0
        one_any += s_st[0].errors > 0
        ref_words += len(words)
        denom += s_st[0].denominator
    out.update({
        "wer_1best": one_w / ref_words, "wer_oracle": best_w / ref_words,
        "semer_1best": one_s / denom, "semer_oracle": best_s / denom,
        "irer_1best": one_any / len(refs), "irer_oracle": best_any / len(refs),
    })
    return out


def evaluate(outputs: dict[str, list[NbestRow]], corpus: Sequence[Utterance]) -> dict:
    """Corpus-level metrics of the 1-best rows; utterances without output count
    as an empty transcript with no intent."""
    by_id = {u.id: u for u in corpus}
    unknown = sorted(set(outputs) - set(by_id))
    if unknown:
        raise ValueError(f"outputs mention ids not in the corpus: {', '.join(unknown[:5])}")
    if not corpus:
        raise ValueError("empty reference corpus")
    edits: list[EditStats] = []
    sems: list[SemanticStats] = []
    pairs = []
    per_utt = []
    missing = 0
    for u in corpus:
        rows = outputs.get(u.id)
        if rows:
            text, interp = rows[0].transcript, rows[0].interpretation
        else:
            missing += 1
            text, interp = "", Interpretation("")
        e = edit_stats(u.words, text.split())
        s = semer(u.interpretation(), interp)
        edits.append(e)
        sems.append(s)
        pairs.append((u.intent, interp.intent))
        per_utt.append({"id": u.id, "word_errors": e.errors, "ref_words": e.ref_len,
                        "semantic": [s.correct, s.deletion, s.insertion, s.substitution]})
    ref_words = sum(e.ref_len for e in edits)
    return {
        "wer": sum(e.errors for e in edits) / ref_words,
        "icer": icer(pairs),
        "icer_macro": icer_macro(pairs),
        "semer": semer_rate(sems),
        "irer": irer(sems),
        "counts": {
            "utterances": len(corpus), "missing": missing, "ref_words": ref_words,
            "substitutions": sum(e.substitutions for e in edits),
            "insertions": sum(e.insertions for e in edits),
            "deletions": sum(e.deletions for e in edits),
            "semantic_correct": sum(s.correct for s in sems),
            "semantic_deletion": sum(s.deletion for s in sems),
            "semantic_insertion": sum(s.insertion for s in sems),
            "semantic_substitution": sum(s.substitution for s in sems),
        },
        "per_intent": intent_recall(pairs),
        "per_utterance": per_utt,
    }


def oracle_report(outputs: dict[str, list[NbestRow]], corpus: Sequence[Utterance]) -> dict:
    nbest = [[Hyp(r.transcript, r.interpretation) for r in outputs.get(u.id, [])]
             or [Hyp("", Interpretation(""))] for u in corpus]
    return nbest_oracle(nbest, corpus)


def summary(report: dict) -> str:
    """Aligned two-column text for the top-level numbers."""
    rows = [(k, f"{v:.4f}") for k, v in report.items() if isinstance(v, float)]
    rows += [(k, str(v)) for k, v in report.get("counts", {}).items()]
    if "per_intent" in report:
        rows += [(f"recall[{k}]", f"{v['recall']:.4f}") for k, v in report["per_intent"].items()]
    width = max((len(k) for k, _ in rows), default=0)
    return "".join(f"{k:<{width}}  {v}\n" for k, v in rows)


def dumps_report(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


__all__ = [
    "EditStats", "Hyp", "SemanticStats", "dumps_report", "edit_stats", "evaluate", "icer",
    "icer_macro", "intent_recall", "irer", "nbest_oracle", "oracle_report", "semer", "semer_rate",
    "summary", "wer",
]
