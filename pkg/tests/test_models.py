import numpy as np
import pytest

from jointslu.autodiff import CheckpointError, Graph, Params
from jointslu.corpus import Interpretation
from jointslu.models import (LAS, NLU, OOD, AudioToIntent, JointSLU, MultiHeadAttention,
                             attend, audio_to_intent_forward, beam_decode, beam_search, build,
                             compose, false_accept_curve, greedy_decode, joint_forward,
                             las_decode_teacher_forced, las_encode, las_greedy, load, nlu_forward,
                             nlu_on_trace, nlu_predict, ood_filter, ood_score, ood_verdict, save)
from jointslu.models.layers import LSTM
from jointslu.models.nbest import NbestFormatError, NbestRow, dumps, loads
from jointslu.pipeline import decode_corpus, map_utterances
from jointslu.tokenizer import EOS, SOS

from conftest import TINY
from gradcheck import MODEL_LOSSES, check_params
from oracles import TableScorer, exhaustive_best, stub_table


@pytest.mark.parametrize("name", sorted(MODEL_LOSSES))
def test_model_loss_gradients(name):
    for seed in range(3):
        rng = np.random.default_rng(seed)
        params, loss_fn = MODEL_LOSSES[name](rng)
        assert check_params(params, loss_fn, rng, coords=2).worst < 1e-4


# --- layers -------------------------------------------------------------------

def test_reverse_lstm_is_forward_lstm_on_reversed_input(rng):
    lstm = LSTM(Params(), "l", 3, 4, rng)
    x = rng.standard_normal((2, 5, 3))
    lengths = np.array([5, 3])
    g = Graph(grad_enabled=False)
    back = lstm.run(g, g.constant(x), lengths, reverse=True).data
    for b, n in enumerate(lengths):
        flipped = x[b:b + 1, :n][:, ::-1].copy()
        fwd = lstm.run(g, g.constant(flipped), np.array([n])).data[0, ::-1]
        np.testing.assert_allclose(back[b, :n], fwd, atol=1e-14)


def test_padding_does_not_leak_into_encoder(rng):
    model = LAS(TINY, 9, rng)
    short = rng.standard_normal((3, 4))
    long = rng.standard_normal((6, 4))
    g = Graph(grad_enabled=False)
    both = model.encode(g, [short, long], trainable=False).z.data
    alone = model.encode(g, [short], trainable=False).z.data
    np.testing.assert_allclose(both[0, :3], alone[0], atol=1e-14)


def test_attention_weights_are_distributions(rng):
    att = MultiHeadAttention(Params(), "a", 5, 6, 2, 3, 4, rng)
    z = rng.standard_normal((7, 6))
    ctx, w = attend(att, rng.standard_normal(5), z)
    assert ctx.shape == (4,) and w.shape == (7, 2)
    np.testing.assert_allclose(w.sum(axis=0), 1.0, atol=1e-12)


def test_attention_masks_padding(rng):
    att = MultiHeadAttention(Params(), "a", 5, 6, 2, 3, 4, rng)
    g = Graph(grad_enabled=False)
    z = rng.standard_normal((2, 4, 6))
    mem = att.memory(g, g.constant(z), np.array([4, 2]), trainable=False)
    _, w = att(g, g.constant(rng.standard_normal((2, 5))), mem, trainable=False)
    assert np.all(w[1, 2:] == 0.0)
    np.testing.assert_allclose(w.sum(axis=1), 1.0, atol=1e-12)


def test_zero_scoring_vector_gives_uniform_attention(rng):
    att = MultiHeadAttention(Params(), "a", 5, 6, 2, 3, 4, rng)
    att.v.value[:] = 0.0
    _, w = attend(att, rng.standard_normal(5), rng.standard_normal((5, 6)))
    np.testing.assert_allclose(w, 0.2, atol=1e-15)


def test_single_frame_attention_is_certain(rng):
    att = MultiHeadAttention(Params(), "a", 5, 6, 2, 3, 4, rng)
    _, w = attend(att, rng.standard_normal(5), rng.standard_normal((1, 6)))
    assert np.all(w == 1.0)


def test_empty_memory_rejected(rng):
    att = MultiHeadAttention(Params(), "a", 5, 6, 2, 3, 4, rng)
    with pytest.raises(ValueError):
        attend(att, rng.standard_normal(5), np.zeros((0, 6)))


# --- architectures ----------------------------------------------------------------

def test_output_shapes(rng):
    a2i = AudioToIntent(TINY, 5, rng)
    assert audio_to_intent_forward(a2i, rng.standard_normal((6, 4))).shape == (5,)
    las = LAS(TINY, 9, rng)
    enc = las_encode(las, rng.standard_normal((6, 4)))
    assert enc.z.shape == (1, 6, 2 * TINY.enc_hidden)
    logits, trace = las_decode_teacher_forced(las, rng.standard_normal((6, 4)), [4, 5, 6])
    assert logits.shape == (4, 9) and len(trace.h) == 4 and trace.h[0].shape == (1, TINY.dec_hidden)
    nlu = NLU(TINY, 3, 4, rng, vocab_size=9)
    il, sl = nlu_forward(nlu, [4, 5, 6, 7])
    assert il.shape == (3,) and sl.shape == (4, 4)


def test_joint_interface_width(rng):
    model = JointSLU(TINY, 9, 3, 4, rng)
    assert model.nlu.d_in == TINY.dec_hidden + TINY.emb_dim
    assert set(model.params.names()) == {p.name for p in model.asr_params() + model.nlu_params()}


def test_audio_to_intent_rejects_empty(rng):
    with pytest.raises(ValueError):
        audio_to_intent_forward(AudioToIntent(TINY, 3, rng), np.zeros((0, 4)))


def test_pooling_ignores_frame_order(rng):
    cfg = TINY.__class__(**{**TINY.__dict__, "a2i_layers": 0})
    model = AudioToIntent(cfg, 3, rng)
    x = rng.standard_normal((7, 4))
    perm = rng.permutation(7)
    np.testing.assert_allclose(audio_to_intent_forward(model, x), audio_to_intent_forward(model, x[perm]),
                               atol=1e-13)


def test_empty_nlu_input_pools_to_zero(rng):
    nlu = NLU(TINY, 3, 4, rng, vocab_size=9)
    il, sl = nlu_forward(nlu, [])
    assert sl.shape == (0, 4) and np.all(np.isfinite(il))


def test_nlu_requires_one_mode(rng):
    with pytest.raises(ValueError):
        NLU(TINY, 3, 4, rng)
    with pytest.raises(ValueError):
        NLU(TINY, 3, 4, rng, vocab_size=9, interface_dim=8)


def test_teacher_forcing_rejects_unknown_piece(rng):
    with pytest.raises(ValueError):
        las_decode_teacher_forced(LAS(TINY, 9, rng), rng.standard_normal((3, 4)), [42])


# --- beam search -------------------------------------------------------------------

def test_beam_recovers_exhaustive_argmax():
    for seed in range(200):
        table = stub_table(np.random.default_rng(seed))
        hyps = beam_search(TableScorer(table), 8, 3)
        score, pieces = exhaustive_best(table, (4, 5), 3)
        assert hyps[0].pieces == pieces
        assert hyps[0].score == pytest.approx(score, abs=1e-12)
        assert len(hyps) == 7


def test_beam_outlasts_weak_early_endings():
    # one confident 6-piece path; every other move, ending included, sits in a
    # flat smoothed tail, so weak endings appear long before the path finishes
    V, steps = 8, 8
    table = np.full((steps, V, V), np.log(0.01 / (V - 1)))
    path = [4, 5, 6, 7, 4, 5]
    for t, (p, q) in enumerate(zip([SOS] + path, path + [EOS])):
        table[t, p, q] = np.log(0.99)
    table -= np.log(np.exp(table).sum(axis=-1, keepdims=True))
    hyps = beam_search(TableScorer(table), 4, steps)
    assert hyps[0].pieces == path + [EOS]
    assert hyps[0].pieces == exhaustive_best(table, (4, 5, 6, 7), steps)[1]


def test_beam_output_sorted_and_terminated():
    table = stub_table(np.random.default_rng(1), vocab=8, steps=6)
    hyps = beam_search(TableScorer(table), 4, 6)
    assert 1 <= len(hyps) <= 4
    assert all(h.pieces[-1] == EOS and EOS not in h.pieces[:-1] for h in hyps)
    assert all(a.score >= b.score for a, b in zip(hyps, hyps[1:]))
    assert all(len(h.pieces) <= 6 and all(q >= 4 for q in h.pieces[:-1]) for h in hyps)


def test_beam_trace_follows_hypothesis():
    table = stub_table(np.random.default_rng(2), vocab=7, steps=5)
    for h in beam_search(TableScorer(table), 3, 5):
        assert [float(e[0]) for e in h.e] == [SOS] + h.pieces[:-1]
        assert [float(x[0]) for x in h.h] == list(range(len(h.pieces)))


def test_beam_one_is_greedy_onstub_table():
    for seed in range(50):
        table = stub_table(np.random.default_rng(seed), vocab=8, steps=6)
        assert beam_search(TableScorer(table), 1, 6)[0].pieces == greedy_decode(TableScorer(table), 6)


def test_beam_arguments_validated():
    table = stub_table(np.random.default_rng(0))
    with pytest.raises(ValueError):
        beam_search(TableScorer(table), 0, 3)
    with pytest.raises(ValueError):
        beam_search(TableScorer(table), 2, 0)


def test_las_beam_one_is_greedy(rng):
    model = LAS(TINY, 9, rng)
    for _ in range(10):
        x = rng.standard_normal((int(rng.integers(1, 6)), 4))
        assert beam_decode(model, x, 1)[0].pieces == las_greedy(model, x)


def test_hypothesis_logprob_matches_rescoring(rng):
    model = LAS(TINY, 9, rng)
    x = rng.standard_normal((4, 4))
    for hyp in beam_decode(model, x, 4):
        logits, trace = las_decode_teacher_forced(model, x, hyp.text_pieces)
        logp = logits - np.log(np.exp(logits - logits.max(1, keepdims=True)).sum(1, keepdims=True)) \
            - logits.max(1, keepdims=True)
        rescored = sum(logp[s, p] for s, p in enumerate(hyp.pieces))
        assert hyp.logprob == pytest.approx(rescored, abs=1e-9)
        for s in range(len(hyp.pieces)):
            np.testing.assert_allclose(hyp.h[s], trace.h[s].data[0], atol=1e-12)
            np.testing.assert_allclose(hyp.e[s], trace.e[s].data[0], atol=0)


# --- composition and joint interpretation ---------------------------------------------

INTENTS = ["Alarm", "Music", "Weather"]
TAGS = ["Other", "Time", "Song"]


@pytest.fixture(scope="module")
def bundles(small_vocab):
    cfg = TINY.__class__(**{**TINY.__dict__, "feat_dim": 64})
    las = build("las", cfg, small_vocab)
    nlu = build("nlu", cfg, small_vocab, INTENTS, TAGS)
    joint = build("joint", cfg, small_vocab, INTENTS, TAGS)
    a2i = build("a2i", cfg, None, INTENTS)
    return {"las": las, "nlu": nlu, "joint": joint, "a2i": a2i}


def test_zeroed_h_joint_nlu_equals_compositional(bundles, small_vocab, rng):
    joint = bundles["joint"]
    comp = NLU(joint.cfg, len(INTENTS), len(TAGS), rng, vocab_size=len(small_vocab))
    E = joint.cfg.emb_dim
    for p in comp.params:
        if p.name == "nlu.emb":
            p.value[...] = joint.model.params["asr.dec.emb"].value
        else:
            src = joint.model.params[p.name].value
            p.value[...] = src if src.shape == p.shape else src[-E:]
    x = rng.standard_normal((9, 64))
    for hyp in beam_decode(joint.model.las, x, 3):
        a = nlu_on_trace(joint.model.nlu, hyp, small_vocab, INTENTS, TAGS, zero_h=True)
        b = nlu_predict(comp, hyp.text_pieces, small_vocab, INTENTS, TAGS)
        assert a[0] == b[0] and a[1] == b[1]
        np.testing.assert_allclose(a[2], b[2], atol=1e-13)


def test_nbest_interpretations_are_isolated(bundles, small_vocab, rng):
    joint = bundles["joint"]
    hyps = beam_decode(joint.model.las, rng.standard_normal((9, 64)), 2)
    first = nlu_on_trace(joint.model.nlu, hyps[0], small_vocab, INTENTS, TAGS)
    if len(hyps) > 1:
        for arr in hyps[1].h + hyps[1].e:
            arr += 100.0
    again = nlu_on_trace(joint.model.nlu, hyps[0], small_vocab, INTENTS, TAGS)
    assert first[1] == again[1]
    np.testing.assert_array_equal(first[2], again[2])


def _silent(bundle_model):
    """Bias the recognizer so it ends every utterance immediately."""
    bundle_model.output.b.value[EOS] = 1e3


def test_empty_one_best_composes(bundles, rng):
    las = build("las", bundles["las"].cfg, bundles["las"].vocab)
    _silent(las.model)
    out = compose(rng.standard_normal((5, 64)), las, bundles["nlu"], 4)
    assert out[0].transcript == "" and out[0].interpretation.slots == ()
    assert out[0].interpretation.intent in INTENTS
    joint = build("joint", bundles["joint"].cfg, bundles["joint"].vocab, INTENTS, TAGS)
    _silent(joint.model.las)
    out = joint_forward(rng.standard_normal((5, 64)), joint, 4)
    assert out[0].transcript == "" and out[0].pieces == []


def test_compose_and_joint_outputs(bundles, rng):
    x = rng.standard_normal((8, 64))
    for decoded in (compose(x, bundles["las"], bundles["nlu"], 4), joint_forward(x, bundles["joint"], 4)):
        assert 1 <= len(decoded) <= 4
        for d in decoded:
            assert abs(d.intent_probs.sum() - 1.0) < 1e-12
            assert d.interpretation.intent in INTENTS
            assert len(d.transcript.split()) >= len(d.interpretation.slots)


def test_ood_verdicts():
    assert ood_verdict(True, 0.3, 0.0) is False
    assert ood_verdict(True, 1.0, 1.0) is True
    assert ood_verdict(False, 0.99, 0.0) is True
    scores = [(True, 0.2), (True, 0.9), (False, 0.8), (True, 0.5)]
    curve = false_accept_curve(scores, np.linspace(0, 1, 11))
    assert curve[0] == 0.75 and curve[-1] == 0.0
    assert all(a >= b for a, b in zip(curve, curve[1:]))


def test_ood_filter_limits(bundles, small_vocab, rng):
    cfg = bundles["joint"].cfg
    wide = build("joint", cfg, small_vocab, INTENTS + ["Chitchat"], TAGS)
    wide.model.nlu.intent.cls.b.value[:] = [5.0, 0.0, 0.0, -5.0]
    narrow = bundles["joint"]
    x = rng.standard_normal((8, 64))
    best = joint_forward(x, wide, 4)[0]
    in_domain, top = ood_score(best, wide.intents, INTENTS)
    assert in_domain and 0 < top < 1
    assert ood_filter(x, wide, narrow, INTENTS, 0.0) == joint_forward(x, narrow, 4)[0].interpretation
    assert ood_filter(x, wide, narrow, INTENTS, 1.0) == OOD
    wide.model.nlu.intent.cls.b.value[:] = [0.0, 0.0, 0.0, 50.0]
    assert ood_filter(x, wide, narrow, INTENTS, 0.0) == OOD


# --- persistence -----------------------------------------------------------------------

def test_checkpoints_round_trip(bundles, tmp_path, rng):
    x = rng.standard_normal((6, 64))
    for kind, bundle in bundles.items():
        path = tmp_path / f"{kind}.ckpt"
        save(path, bundle)
        back = load(path, expect=kind)
        assert back.kind == kind and back.intents == bundle.intents and back.tags == bundle.tags
        for p in bundle.params:
            assert np.array_equal(back.params[p.name].value, p.value)
        save(tmp_path / "again.ckpt", back)
        assert (tmp_path / "again.ckpt").read_bytes() == path.read_bytes()
    with pytest.raises(CheckpointError):
        load(tmp_path / "las.ckpt", expect="nlu")
    np.testing.assert_array_equal(audio_to_intent_forward(load(tmp_path / "a2i.ckpt").model, x),
                                  audio_to_intent_forward(bundles["a2i"].model, x))


def test_build_rejects_unknown_kind():
    with pytest.raises(ValueError):
        build("rnnt", TINY)


def test_nbest_file_round_trip():
    rows = [NbestRow("u1", 1, -0.25, "set an alarm", Interpretation("Alarm", (("Type", "alarm"),))),
            NbestRow("u1", 2, -0.5, "set a alarm", Interpretation("Alarm", ())),
            NbestRow("u2", 1, -1 / 3, "", Interpretation("Music", ()))]
    text = dumps(rows)
    assert text.splitlines()[0] == "id\trank\tscore\ttranscript\tintent\tslots"
    back = loads(text)
    assert back["u1"] == rows[:2] and back["u2"] == rows[2:]


@pytest.mark.parametrize("line", ["u1\t2\t-0.1\tx\tI\t", "u1\t1\tnan\tx\tI\t", "u1\t1\t-0.1\tx\tI",
                                  "u1\tone\t-0.1\tx\tI\t", "u1\t1\t-0.1\tx\tI\tbad"])
def test_nbest_file_errors(line):
    with pytest.raises(NbestFormatError, match="line 2"):
        loads("id\trank\tscore\ttranscript\tintent\tslots\n" + line + "\n")


def test_parallel_decoding_matches_serial(bundles, small_split):
    utts = small_split[2][:6]
    serial = decode_corpus(utts, bundles["joint"], 2, threads=1)
    parallel = decode_corpus(utts, bundles["joint"], 2, threads=3)
    assert dumps(serial) == dumps(parallel)
    assert map_utterances(lambda v: v * 2, [1, 2, 3], 2) == [2, 4, 6]
