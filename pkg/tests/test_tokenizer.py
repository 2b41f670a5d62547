import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jointslu.tokenizer import (MARKER, N_RESERVED, RESERVED, Segmentation, SubwordVocab, TrainTrace,
                                VocabError, detokenize, encode, segment_sample, segment_viterbi,
                                train_unigram, word_begins)

from oracles import all_segmentations


def toy_vocab(pieces_probs):
    pieces = list(RESERVED) + [p for p, _ in pieces_probs]
    return SubwordVocab(pieces, [0.0] * N_RESERVED + [math.log(q) for _, q in pieces_probs])


def test_vocab_probabilities_normalized(small_vocab):
    assert math.fsum(np.exp(small_vocab.log_probs[N_RESERVED:])) == pytest.approx(1.0, abs=1e-9)
    assert len(small_vocab) == 120
    assert small_vocab.pieces[:N_RESERVED] == list(RESERVED)


def test_every_corpus_character_is_a_piece(small_corpus, small_vocab):
    chars = {c for u in small_corpus for c in MARKER + u.transcript.replace(" ", "")}
    assert chars <= small_vocab.charset


def test_viterbi_matches_brute_force(small_corpus, small_vocab):
    words = sorted({MARKER + w for u in small_corpus for w in u.words if len(w) + 1 <= 10})
    assert len(words) > 20
    for w in words:
        cands = all_segmentations(w, small_vocab)
        top = max(small_vocab.score(c) for c in cands)
        best = [c for c in cands if small_vocab.score(c) == top]
        got = segment_viterbi(w[1:], small_vocab).ids
        assert small_vocab.score(got) == pytest.approx(top, abs=1e-12)
        assert got in best


def test_word_present_as_piece_is_single_segment():
    vocab = toy_vocab([("▁", 0.1), ("a", 0.1), ("l", 0.1), ("r", 0.1), ("m", 0.1), ("▁alarm", 0.5)])
    assert segment_viterbi("alarm", vocab).ids == (vocab.index["▁alarm"],)


def test_empty_text_segments_to_nothing(small_vocab):
    assert segment_viterbi("", small_vocab) == Segmentation((), ())
    assert detokenize([], small_vocab) == ""


def test_round_trip_examples(small_vocab):
    assert detokenize(segment_viterbi("set an alarm", small_vocab), small_vocab) == "set an alarm"
    vocab = toy_vocab([("▁alarm", 1.0)])
    assert detokenize([vocab.index["▁alarm"]], vocab) == "alarm"


def test_round_trip_every_transcript(small_corpus, small_vocab):
    rng = np.random.default_rng(3)
    for u in small_corpus:
        assert detokenize(segment_viterbi(u.transcript, small_vocab), small_vocab) == u.transcript
        assert detokenize(segment_sample(u.transcript, small_vocab, 0.5, rng), small_vocab) == u.transcript


def test_detokenize_rejects_reserved_and_unknown(small_vocab):
    with pytest.raises(VocabError):
        detokenize([2], small_vocab)
    with pytest.raises(VocabError):
        detokenize([len(small_vocab)], small_vocab)


def test_missing_character_is_an_error(small_vocab):
    with pytest.raises(VocabError):
        segment_viterbi("xyz#", small_vocab)


def test_sampling_matches_enumerated_lattice():
    vocab = toy_vocab([("a", 0.2), ("b", 0.3), ("ab", 0.25), ("▁", 0.15), ("▁a", 0.1)])
    alpha = 0.7
    word = MARKER + "ab"
    cands = all_segmentations(word, vocab)
    weights = np.array([math.exp(alpha * vocab.score(c)) for c in cands])
    expected = dict(zip(cands, weights / weights.sum()))
    rng = np.random.default_rng(12)
    n = 10_000
    seen = Counter(segment_sample("ab", vocab, alpha, rng).ids for _ in range(n))
    assert set(seen) <= set(expected)
    for c, p in expected.items():
        assert abs(seen[c] / n - p) < 0.02


def test_large_alpha_sampling_is_viterbi(small_corpus, small_vocab):
    rng = np.random.default_rng(5)
    for u in small_corpus[:50]:
        assert segment_sample(u.transcript, small_vocab, 100.0, rng) == segment_viterbi(u.transcript, small_vocab)


def test_sampling_is_seeded(small_vocab):
    a = segment_sample("set an alarm for six a.m.", small_vocab, 0.3, 9)
    b = segment_sample("set an alarm for six a.m.", small_vocab, 0.3, 9)
    assert a == b


def test_sampling_rejects_bad_alpha(small_vocab):
    with pytest.raises(ValueError):
        segment_sample("set", small_vocab, 0.0, 1)


def test_viterbi_beats_samples(small_corpus, small_vocab):
    rng = np.random.default_rng(8)
    for u in small_corpus[:40]:
        best = small_vocab.score(segment_viterbi(u.transcript, small_vocab).ids)
        sampled = small_vocab.score(segment_sample(u.transcript, small_vocab, 0.2, rng).ids)
        assert best >= sampled - 1e-12


def test_em_log_likelihood_non_decreasing(small_corpus):
    trace = TrainTrace([])
    train_unigram([u.transcript for u in small_corpus], 120, trace=trace)
    assert trace.rounds
    for history in trace.rounds:
        assert all(b >= a - 1e-9 for a, b in zip(history, history[1:]))


def test_one_word_corpus_learns_the_word():
    vocab = train_unigram(["alarm"] * 30, 40)
    seg = segment_viterbi("alarm", vocab)
    assert [vocab.piece(i) for i in seg.ids] == ["▁alarm"]


def test_minimal_target_is_characters_only(small_corpus):
    texts = [u.transcript for u in small_corpus]
    chars = sorted({c for t in texts for c in MARKER + t.replace(" ", "")})
    vocab = train_unigram(texts, len(chars) + N_RESERVED)
    assert vocab.pieces == list(RESERVED) + chars
    with pytest.raises(VocabError):
        train_unigram(texts, len(chars) + N_RESERVED - 1)


def test_empty_corpus_rejected():
    with pytest.raises(VocabError):
        train_unigram([], 50)


def test_training_is_deterministic(small_corpus, small_vocab):
    again = train_unigram([u.transcript for u in small_corpus], 120)
    assert again.dumps() == small_vocab.dumps()


def test_vocab_file_round_trip(tmp_path, small_vocab):
    path = tmp_path / "vocab.txt"
    small_vocab.save(path)
    back = SubwordVocab.load(path)
    assert back == small_vocab
    assert path.read_text(encoding="utf-8").splitlines()[0] == "<pad>\t0.0"
    back.save(tmp_path / "again.txt")
    assert (tmp_path / "again.txt").read_bytes() == path.read_bytes()


def test_vocab_file_errors():
    with pytest.raises(VocabError, match="line 1"):
        SubwordVocab.loads("no tab here\n")
    with pytest.raises(VocabError):
        SubwordVocab.loads("a\t0.0\n")


def test_word_begins_and_encode(small_vocab):
    ids = encode("set an alarm", small_vocab)
    begins = word_begins(ids, small_vocab)
    assert sum(begins) == 3 and begins[0]


@settings(max_examples=60, deadline=None)
@given(st.lists(st.sampled_from(["set", "an", "alarm", "for", "six", "a.m.", "me", "the"]), min_size=1, max_size=6))
def test_round_trip_property(small_vocab, words):
    text = " ".join(words)
    seg = segment_viterbi(text, small_vocab)
    assert detokenize(seg, small_vocab) == text
    assert sum(seg.word_begin) == len(words)
