from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jointslu.corpus import Interpretation
from jointslu.metrics import (Hyp, SemanticStats, dumps_report, edit_stats, evaluate, icer, icer_macro,
                              intent_recall, irer, nbest_oracle, oracle_report, semer, semer_rate,
                              summary, wer)
from jointslu.models.nbest import NbestRow

from oracles import all_sequences, edit_distance

TABLE_ONE = Interpretation("SetNotificationIntent", (("NotificationType", "alarm"), ("Time", "six a.m.")))


def test_wer_matches_exhaustive_oracle():
    seqs = list(all_sequences("abc", 5))
    assert len(seqs) == 364
    for ref in seqs:
        for hyp in seqs:
            st_ = edit_stats(ref, hyp)
            assert st_.errors == edit_distance(ref, hyp)
            assert st_.correct + st_.substitutions + st_.deletions == len(ref)
            assert st_.correct + st_.substitutions + st_.insertions == len(hyp)


def test_wer_examples():
    assert wer(["set", "an", "alarm"], ["set", "an", "alarm"])[1] == 0.0
    stats, ratio = wer(["set", "an", "alarm"], ["set", "the", "alarm"])
    assert ratio == pytest.approx(1 / 3) and stats.substitutions == 1
    stats, ratio = wer(["a"], [])
    assert ratio == 1.0 and stats.deletions == 1
    with pytest.raises(ValueError):
        wer([], ["a"])


def test_backtrace_prefers_substitution():
    st_ = edit_stats(["a", "b"], ["c"])
    assert (st_.substitutions, st_.deletions, st_.insertions) == (1, 1, 0)
    st_ = edit_stats(["a"], ["b", "c"])
    assert (st_.substitutions, st_.insertions, st_.deletions) == (1, 1, 0)


def test_icer_examples():
    assert icer([("A", "A"), ("B", "B")]) == 0.0
    assert icer([("A", "A"), ("B", "A"), ("C", "C"), ("A", "A")]) == 0.25
    with pytest.raises(ValueError):
        icer([])


def test_per_intent_recall_matches_direct_counts():
    rng = np.random.default_rng(0)
    labels = ["A", "B", "C", "D"]
    pairs = [(labels[rng.integers(4)], labels[rng.integers(4)]) for _ in range(200)]
    table = intent_recall(pairs)
    for k in labels:
        rows = [p for r, p in pairs if r == k]
        assert table[k]["count"] == len(rows)
        assert table[k]["recall"] == sum(p == k for p in rows) / len(rows)
    assert icer_macro(pairs) == pytest.approx(np.mean([1 - table[k]["recall"] for k in labels]))


def test_semer_hand_examples():
    assert semer(TABLE_ONE, TABLE_ONE).rate == 0.0
    pm = Interpretation(TABLE_ONE.intent, (("NotificationType", "alarm"), ("Time", "six p.m.")))
    st_ = semer(TABLE_ONE, pm)
    assert (st_.correct, st_.deletion, st_.insertion, st_.substitution) == (2, 0, 0, 1)
    assert st_.rate == 1 / 3
    dropped = Interpretation("SetTimerIntent", (("NotificationType", "alarm"),))
    st_ = semer(TABLE_ONE, dropped)
    assert (st_.correct, st_.deletion, st_.insertion, st_.substitution) == (1, 1, 0, 1)
    assert st_.rate == 2 / 3


def test_semer_insertions_and_whitespace():
    hyp = Interpretation(TABLE_ONE.intent, TABLE_ONE.slots + (("Date", "today"),))
    st_ = semer(TABLE_ONE, hyp)
    assert st_.insertion == 1 and st_.denominator == 3
    spaced = Interpretation(TABLE_ONE.intent, (("NotificationType", "alarm"), ("Time", "six  a.m.")))
    assert semer(TABLE_ONE, spaced).errors == 0
    cased = Interpretation(TABLE_ONE.intent, (("NotificationType", "Alarm"), ("Time", "six a.m.")))
    assert semer(TABLE_ONE, cased).substitution == 1


def test_semer_denominator_on_corpus(small_corpus):
    rng = np.random.default_rng(1)
    for u in small_corpus:
        ref = u.interpretation()
        hyp = Interpretation(u.intent if rng.random() < 0.5 else "Other",
                             tuple(s for s in ref.slots if rng.random() < 0.5))
        assert semer(ref, hyp).denominator == len(ref.slots) + 1


slots = st.lists(st.tuples(st.sampled_from(["A", "B", "C"]), st.sampled_from(["x", "y", "x y"])), max_size=5)


@settings(max_examples=300, deadline=None)
@given(slots, slots, st.sampled_from(["I", "J"]), st.randoms(use_true_random=False))
def test_semer_is_order_free(ref_slots, hyp_slots, intent, rnd):
    ref = Interpretation("I", tuple(ref_slots))
    hyp = Interpretation(intent, tuple(hyp_slots))
    base = semer(ref, hyp)
    shuffled_r, shuffled_h = list(ref_slots), list(hyp_slots)
    rnd.shuffle(shuffled_r)
    rnd.shuffle(shuffled_h)
    assert semer(Interpretation("I", tuple(shuffled_r)), Interpretation(intent, tuple(shuffled_h))) == base
    assert base.denominator == len(ref_slots) + 1
    assert base.correct + base.deletion + base.substitution == len(ref_slots) + 1
    assert base.correct + base.insertion + base.substitution == len(hyp_slots) + 1
    assert semer(ref, ref).errors == 0


def _semer_oracle(ref, hyp):
    # exact matches first, then name-only pairs, then leftovers
    r, h = list(ref.slots), list(hyp.slots)
    c = 0
    for item in list(r):
        if item in h:
            r.remove(item)
            h.remove(item)
            c += 1
    s = 0
    for name, value in list(r):
        match = next((x for x in h if x[0] == name), None)
        if match is not None:
            r.remove((name, value))
            h.remove(match)
            s += 1
    c, s = (c + 1, s) if ref.intent == hyp.intent else (c, s + 1)
    return SemanticStats(c, len(r), len(h), s)


@settings(max_examples=300, deadline=None)
@given(slots, slots, st.sampled_from(["I", "J"]))
def test_semer_matches_greedy_oracle(ref_slots, hyp_slots, intent):
    ref = Interpretation("I", tuple(ref_slots))
    hyp = Interpretation(intent, tuple(hyp_slots))
    assert semer(ref, hyp) == _semer_oracle(ref, hyp)


def test_irer_examples():
    ok = SemanticStats(2, 0, 0, 0)
    bad = SemanticStats(1, 1, 0, 0)
    assert irer([ok] * 5) == 0.0
    assert irer([ok] * 4 + [bad]) == 0.2
    with pytest.raises(ValueError):
        irer([])
    assert semer_rate([ok, bad]) == 1 / 4


def _random_results(rng, n=40):
    refs, hyps = [], []
    for _ in range(n):
        names = rng.choice(["A", "B", "C"], size=rng.integers(0, 4))
        ref = Interpretation(str(rng.choice(["I", "J", "K"])), tuple((str(a), "v") for a in names))
        keep = tuple(s for s in ref.slots if rng.random() < 0.7)
        hyp = Interpretation(ref.intent if rng.random() < 0.7 else "J", keep)
        refs.append(ref)
        hyps.append(hyp)
    return refs, hyps


def test_irer_bounds_icer():
    for seed in range(100):
        refs, hyps = _random_results(np.random.default_rng(seed))
        stats = [semer(r, h) for r, h in zip(refs, hyps)]
        assert irer(stats) >= icer([(r.intent, h.intent) for r, h in zip(refs, hyps)])


def test_nbest_oracle(small_corpus):
    refs = small_corpus[:10]
    one = [[Hyp("wrong words", Interpretation("X"))] for _ in refs]
    res = nbest_oracle(one, refs)
    assert res["wer_oracle"] == res["wer_1best"] and res["semer_oracle"] == res["semer_1best"]
    with_ref = [h + [Hyp(u.transcript, u.interpretation())] for h, u in zip(one, refs)]
    res = nbest_oracle(with_ref, refs)
    assert res["wer_oracle"] == 0.0 and res["semer_oracle"] == 0.0 and res["irer_oracle"] == 0.0
    assert res["wer_1best"] > 0
    with pytest.raises(ValueError):
        nbest_oracle([[]], refs[:1])


def test_oracle_never_worse(small_corpus):
    rng = np.random.default_rng(3)
    for _ in range(20):
        nbest = []
        for u in small_corpus[:15]:
            words = u.words
            hyps = []
            for _ in range(int(rng.integers(1, 5))):
                w = [x for x in words if rng.random() < 0.8]
                hyps.append(Hyp(" ".join(w), Interpretation(u.intent if rng.random() < 0.8 else "X")))
            nbest.append(hyps)
        res = nbest_oracle(nbest, small_corpus[:15])
        for m in ("wer", "semer", "irer"):
            assert res[f"{m}_oracle"] <= res[f"{m}_1best"]


def _rows(utts, transform=lambda u: (u.transcript, u.interpretation())):
    out = {}
    for u in utts:
        text, interp = transform(u)
        out[u.id] = [NbestRow(u.id, 1, -0.1, text, interp)]
    return out


def test_evaluate_perfect_and_empty(small_corpus):
    utts = small_corpus[:30]
    rep = evaluate(_rows(utts), utts)
    assert rep["wer"] == rep["icer"] == rep["semer"] == rep["irer"] == rep["icer_macro"] == 0.0
    rep = evaluate({}, utts)
    assert rep["irer"] == 1.0 and rep["wer"] == 1.0 and rep["icer"] == 1.0
    assert rep["counts"]["missing"] == 30 and rep["counts"]["deletions"] == rep["counts"]["ref_words"]


def test_evaluate_rejects_unknown_ids(small_corpus):
    with pytest.raises(ValueError):
        evaluate({"nope": [NbestRow("nope", 1, 0.0, "", Interpretation("I"))]}, small_corpus[:3])


def test_evaluate_report_is_consistent(small_corpus):
    utts = small_corpus[:40]
    rng = np.random.default_rng(9)

    def noisy(u):
        words = [w for w in u.words if rng.random() < 0.85]
        slots = tuple(s for s in u.interpretation().slots if rng.random() < 0.8)
        return " ".join(words), Interpretation(u.intent if rng.random() < 0.8 else "X", slots)
    rep = evaluate(_rows(utts, noisy), utts)
    per = rep["per_utterance"]
    sem = np.array([p["semantic"] for p in per])
    c, d, i, s = sem.sum(axis=0)
    assert rep["semer"] == pytest.approx((d + i + s) / (c + d + s), abs=0)
    assert rep["irer"] == np.mean(sem[:, 1:].sum(axis=1) > 0)
    assert rep["wer"] == sum(p["word_errors"] for p in per) / sum(p["ref_words"] for p in per)
    counts = Counter(u.intent for u in utts)
    assert {k: v["count"] for k, v in rep["per_intent"].items()} == dict(counts)
    text = summary(rep)
    assert "semer" in text and "recall[" in text


def test_report_serialization_is_stable(small_corpus):
    utts = small_corpus[:20]
    a = dumps_report(evaluate(_rows(utts), utts))
    b = dumps_report(evaluate(_rows(list(reversed(utts))), utts))
    assert a == b


def test_oracle_report_fills_missing(small_corpus):
    utts = small_corpus[:5]
    rep = oracle_report(_rows(utts[:3]), utts)
    assert rep["utterances"] == 5 and rep["irer_1best"] == 0.4
