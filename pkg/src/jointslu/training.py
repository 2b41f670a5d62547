"""Training loops for every model kind, SpecAugment-style masking and the
three-stage joint schedule.

Each epoch draws its randomness from ``default_rng([seed, epoch])``: first the
subword segmentations of every training utterance (in corpus order), then the
batch order, then one mask seed per utterance as batches are visited.
"""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .autodiff import Adam, Graph, Parameter, clip_grad_norm, ops
from .config import STAGE_NAMES as STAGES, ModelConfig, TrainConfig
from .corpus.annotation import OTHER, project_tags_to_subwords
from .corpus.grammar import Utterance
from .metrics import edit_stats, semer
from .models import a2i_loss, build, joint_loss, las_loss, nlu_loss
from .models.beam import BANNED, default_max_len
from .models.joint import _interpret
from .models.las import LAS
from .models.nlu import interface_inputs
from .models.store import Bundle
from .tokenizer import EOS, SOS, SubwordVocab, detokenize, segment_sample, segment_viterbi

log = logging.getLogger("jointslu")



# --- augmentation and batching ----------------------------------------------

def spec_augment(features: np.ndarray, tcfg: TrainConfig, seed) -> np.ndarray:
    """Zero ``time_masks`` runs of rows and ``feat_masks`` runs of columns.

    Widths are clamped to the matrix; the input array is never modified."""
    out = np.array(features, dtype=float, copy=True)
    rng = np.random.default_rng(seed)
    T, D = out.shape
    for _ in range(tcfg.time_masks):
        w = min(tcfg.time_mask_width, T)
        start = int(rng.integers(0, T - w + 1))
        out[start:start + w, :] = 0.0
    for _ in range(tcfg.feat_masks):
        w = min(tcfg.feat_mask_width, D)
        start = int(rng.integers(0, D - w + 1))
        out[:, start:start + w] = 0.0
    return out


def batch_order(lengths: Sequence[int], batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Shuffled batches of similar length: shuffle, sort windows of eight
    batches by length, cut, then shuffle the batch order."""
    perm = rng.permutation(len(lengths))
    lengths = np.asarray(lengths)
    window = batch_size * 8
    batches = []
    for s in range(0, len(perm), window):
        chunk = perm[s:s + window]
        chunk = chunk[np.argsort(lengths[chunk], kind="stable")]
        batches.extend(chunk[k:k + batch_size] for k in range(0, len(chunk), batch_size))
    return [batches[i] for i in rng.permutation(len(batches))]


def _chunks(n: int, size: int) -> list[np.ndarray]:
    return [np.arange(s, min(s + size, n)) for s in range(0, n, size)]


# --- reports -------------------------------------------------------------------

@dataclass
class EpochRecord:
    stage: str
    epoch: int
    steps: int
    train_loss: float
    dev_loss: float
    dev_metric: str
    dev_value: float
    seconds: float


@dataclass
class TrainReport:
    kind: str
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: dict[str, int] = field(default_factory=dict)
    wall_clock: float = 0.0

    def stage(self, name: str) -> list[EpochRecord]:
        return [r for r in self.epochs if r.stage == name]

    def to_json(self) -> str:
        return json.dumps({"kind": self.kind, "best_epoch": self.best_epoch,
                           "wall_clock": self.wall_clock,
                           "epochs": [dataclasses.asdict(r) for r in self.epochs]}, indent=2) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        names = [f.name for f in dataclasses.fields(EpochRecord)]
        w = csv.DictWriter(buf, fieldnames=names, lineterminator="\n")
        w.writeheader()
        for r in self.epochs:
            w.writerow(dataclasses.asdict(r))
        return buf.getvalue()


# --- label sets ----------------------------------------------------------------

def label_sets(utts: Sequence[Utterance]) -> tuple[list[str], list[str]]:
    """Sorted intents and slot tags (``Other`` first) seen in ``utts``."""
    intents = sorted({u.intent for u in utts})
    names = sorted({t for u in utts for t in u.tags} - {OTHER})
    return intents, [OTHER] + names


def _intent_ids(utts: Sequence[Utterance], intents: Sequence[str]) -> np.ndarray:
    index = {k: i for i, k in enumerate(intents)}
    missing = sorted({u.intent for u in utts} - set(index))
    if missing:
        raise ValueError(f"intents not in the label set: {', '.join(missing)}")
    return np.array([index[u.intent] for u in utts], dtype=np.int64)


def _check(utts: Sequence[Utterance], name: str) -> None:
    if not utts:
        raise ValueError(f"{name} corpus is empty")
    for u in utts:
        if u.features is None or len(u.features) == 0:
            raise ValueError(f"{u.id}: missing features")


# --- the generic loop ------------------------------------------------------------

def _fit(stage: str, bundle: Bundle, train: Sequence[Utterance], tcfg: TrainConfig,
         update: list[Parameter], prepare: Callable, loss_fn: Callable, dev_fn: Callable,
         report: TrainReport) -> None:
    """Adam over ``update``; keeps the epoch with the lowest dev metric."""
    opt = Adam(update, tcfg.lr)
    lengths = [len(u.features) for u in train]
    best, best_state, best_epoch = math.inf, None, 0
    steps = 0
    for epoch in range(1, tcfg.epochs + 1):
        t0 = time.perf_counter()
        rng = np.random.default_rng([tcfg.seed, epoch])
        data = prepare(rng)
        total = 0.0
        done = 0
        for idx in batch_order(lengths, tcfg.batch_size, rng):
            seeds = rng.integers(0, 2**63 - 1, size=len(idx))
            g = Graph()
            loss = loss_fn(g, idx, data, seeds)
            bundle.params.zero_grad()
            g.backward(loss)
            clip_grad_norm(update, tcfg.clip)
            opt.step()
            total += loss.item()
            done += 1
            steps += 1
            if tcfg.max_steps and steps >= tcfg.max_steps:
                break
        dev_loss, metric, value = dev_fn()
        rec = EpochRecord(stage, epoch, steps, total / max(done, 1), dev_loss, metric, value,
                          time.perf_counter() - t0)
        report.epochs.append(rec)
        log.info("stage=%s epoch=%d step=%d train_loss=%.6f dev_loss=%.6f dev_%s=%.6f seconds=%.1f",
                 stage, epoch, steps, rec.train_loss, dev_loss, metric, value, rec.seconds)
        if value < best:
            best, best_epoch = value, epoch
            best_state = bundle.params.state()
        if tcfg.max_steps and steps >= tcfg.max_steps:
            break
    if tcfg.keep_best and best_state is not None:
        bundle.params.load_state(best_state)
    report.best_epoch[stage] = best_epoch


def _features(train: Sequence[Utterance], idx, seeds, tcfg: TrainConfig) -> list[np.ndarray]:
    return [spec_augment(train[i].features, tcfg, s) for i, s in zip(idx, seeds)]


# --- audio to intent ---------------------------------------------------------------

def train_audio_to_intent(train: Sequence[Utterance], dev: Sequence[Utterance], tcfg: TrainConfig,
                          cfg: ModelConfig | None = None, intents: Sequence[str] | None = None
                          ) -> tuple[Bundle, TrainReport]:
    _check(train, "training")
    cfg = cfg or ModelConfig()
    intents = list(intents) if intents is not None else label_sets(train)[0]
    bundle = build("a2i", cfg, intents=intents)
    y = _intent_ids(train, intents)
    report = TrainReport("a2i")
    t0 = time.perf_counter()

    def loss_fn(g, idx, data, seeds):
        return a2i_loss(g, bundle.model, _features(train, idx, seeds, tcfg), y[idx])

    _fit("a2i", bundle, train, tcfg, list(bundle.params), lambda rng: None, loss_fn,
         lambda: dev_a2i(bundle, dev, tcfg.batch_size), report)
    report.wall_clock = time.perf_counter() - t0
    return bundle, report


def a2i_predict(bundle: Bundle, utts: Sequence[Utterance], batch_size: int = 32) -> np.ndarray:
    """Intent probabilities ``(N, n_intents)``."""
    out = []
    for idx in _chunks(len(utts), batch_size):
        g = Graph(grad_enabled=False)
        logits = bundle.model.forward(g, [utts[i].features for i in idx], trainable=False).data
        z = np.exp(logits - logits.max(axis=1, keepdims=True))
        out.append(z / z.sum(axis=1, keepdims=True))
    return np.concatenate(out) if out else np.zeros((0, len(bundle.intents)))


def dev_a2i(bundle: Bundle, dev: Sequence[Utterance], batch_size: int = 32) -> tuple[float, str, float]:
    if not dev:
        return math.nan, "icer", math.nan
    probs = a2i_predict(bundle, dev, batch_size)
    y = _intent_ids(dev, bundle.intents)
    loss = float(-np.mean(np.log(np.maximum(probs[np.arange(len(y)), y], 1e-300))))
    return loss, "icer", float(np.mean(probs.argmax(axis=1) != y))


# --- LAS -------------------------------------------------------------------------------

def _sampled_pieces(utts: Sequence[Utterance], vocab: SubwordVocab, alpha: float, rng):
    return [segment_sample(u.transcript, vocab, alpha, rng) for u in utts]


def train_las(train: Sequence[Utterance], dev: Sequence[Utterance], tcfg: TrainConfig,
              vocab: SubwordVocab, cfg: ModelConfig | None = None, init: Bundle | None = None
              ) -> tuple[Bundle, TrainReport]:
    """Label-smoothed teacher-forced CE with per-epoch resampled segmentations.
    ``init`` continues from an existing LAS bundle (trained in place)."""
    _check(train, "training")
    bundle = init if init is not None else build("las", cfg or ModelConfig(), vocab)
    report = TrainReport("las")
    t0 = time.perf_counter()

    def loss_fn(g, idx, segs, seeds):
        loss, _, _ = las_loss(g, bundle.model, _features(train, idx, seeds, tcfg),
                              [list(segs[i].ids) for i in idx], tcfg.smoothing)
        return loss

    _fit("las", bundle, train, tcfg, list(bundle.params),
         lambda rng: _sampled_pieces(train, bundle.vocab, tcfg.alpha, rng), loss_fn,
         lambda: dev_las(bundle.model, bundle.vocab, dev, tcfg), report)
    report.wall_clock = time.perf_counter() - t0
    return bundle, report


@dataclass
class GreedyResult:
    pieces: list[int]       # without EOS
    h: np.ndarray           # (steps, H); step s consumed piece s-1 (SOS at step 0)
    e: np.ndarray


def greedy_batch(las: LAS, feats: Sequence[np.ndarray], max_len: int | None = None) -> list[GreedyResult]:
    """Greedy decoding of several utterances at once (rows stop at EOS)."""
    g = Graph(grad_enabled=False)
    enc = las.encode(g, list(feats), trainable=False)
    B = len(feats)
    limits = np.array([max_len or default_max_len(len(f)) for f in feats])
    state = las.initial_state(g, enc, trainable=False)
    prev = np.full(B, SOS)
    alive = np.ones(B, dtype=bool)
    pieces: list[list[int]] = [[] for _ in range(B)]
    hs, es = [[] for _ in range(B)], [[] for _ in range(B)]
    for t in range(int(limits.max())):
        h, e, logits, state, _ = las.step(g, enc, state, prev, trainable=False)
        z = logits.data.copy()
        z[:, list(BANNED)] = -np.inf
        choice = np.argmax(z, axis=1)
        choice[t == limits - 1] = EOS
        for b in np.flatnonzero(alive):
            hs[b].append(h.data[b])
            es[b].append(e.data[b])
            if choice[b] == EOS:
                alive[b] = False
            else:
                pieces[b].append(int(choice[b]))
        if not alive.any():
            break
        prev = np.where(alive, choice, EOS)
    return [GreedyResult(p, np.array(h), np.array(e)) for p, h, e in zip(pieces, hs, es)]


def _viterbi_ids(utts, vocab):
    return [list(segment_viterbi(u.transcript, vocab).ids) for u in utts]


def dev_las(las: LAS, vocab: SubwordVocab, dev: Sequence[Utterance], tcfg: TrainConfig,
            batch_size: int = 32) -> tuple[float, str, float]:
    """Teacher-forced dev loss on Viterbi pieces and greedy-decoding WER."""
    if not dev:
        return math.nan, "wer", math.nan
    pieces = _viterbi_ids(dev, vocab)
    loss = errors = words = 0.0
    for idx in _chunks(len(dev), batch_size):
        g = Graph(grad_enabled=False)
        feats = [dev[i].features for i in idx]
        l, _, _ = las_loss(g, las, feats, [pieces[i] for i in idx], tcfg.smoothing, trainable=False)
        loss += l.item() * len(idx)
        for i, r in zip(idx, greedy_batch(las, feats)):
            errors += edit_stats(dev[i].words, detokenize(r.pieces, vocab).split()).errors
            words += len(dev[i].words)
    return loss / len(dev), "wer", errors / words


# --- NLU ---------------------------------------------------------------------------------

def _tag_ids(tags: Sequence[str], index: dict[str, int]) -> list[int]:
    try:
        return [index[t] for t in tags]
    except KeyError as exc:
        raise ValueError(f"slot tag {exc.args[0]!r} not in the tag set") from None


def _piece_targets(utts, vocab, segs, tags):
    index = {t: i for i, t in enumerate(tags)}
    pieces, targets = [], []
    for u, seg in zip(utts, segs):
        ids, ptags = project_tags_to_subwords(u.words, u.tags, vocab, seg)
        pieces.append(ids)
        targets.append(_tag_ids(ptags, index))
    return pieces, targets


def train_nlu(train: Sequence[Utterance], dev: Sequence[Utterance], tcfg: TrainConfig,
              vocab: SubwordVocab, cfg: ModelConfig | None = None,
              intents: Sequence[str] | None = None, tags: Sequence[str] | None = None
              ) -> tuple[Bundle, TrainReport]:
    """Intent CE plus mean per-piece slot CE on Viterbi pieces of the reference text."""
    _check(train, "training")
    li, lt = label_sets(train)
    intents = list(intents) if intents is not None else li
    tags = list(tags) if tags is not None else lt
    bundle = build("nlu", cfg or ModelConfig(), vocab, intents, tags)
    y = _intent_ids(train, intents)
    pieces, targets = _piece_targets(train, vocab, [None] * len(train), tags)
    report = TrainReport("nlu")
    t0 = time.perf_counter()

    def loss_fn(g, idx, data, seeds):
        xs, lengths = bundle.model.inputs_from_pieces(g, [pieces[i] for i in idx])
        il, sl = bundle.model.forward(g, xs, lengths)
        a, b = nlu_loss(g, il, sl, lengths, y[idx], [targets[i] for i in idx])
        return ops.add(ops.mul(a, tcfg.w_intent), ops.mul(b, tcfg.w_slot))

    _fit("nlu", bundle, _by_pieces(train, pieces), tcfg, list(bundle.params), lambda rng: None,
         loss_fn, lambda: dev_nlu(bundle, dev), report)
    report.wall_clock = time.perf_counter() - t0
    return bundle, report


def _by_pieces(utts, pieces):
    """Stand-ins whose ``features`` length is the piece count, for length bucketing."""
    return [dataclasses.replace(u, features=np.zeros((max(len(p), 1), 1))) for u, p in zip(utts, pieces)]


def nlu_batch(bundle: Bundle, pieces: list[list[int]], batch_size: int = 64):
    """(intent logits, slot logits) per utterance for compositional NLU."""
    out = []
    for idx in _chunks(len(pieces), batch_size):
        g = Graph(grad_enabled=False)
        xs, lengths = bundle.model.inputs_from_pieces(g, [pieces[i] for i in idx], trainable=False)
        il, sl = bundle.model.forward(g, xs, lengths, trainable=False)
        out.extend((il.data[k], sl.data[k, :lengths[k]]) for k in range(len(idx)))
    return out


def dev_nlu(bundle: Bundle, dev: Sequence[Utterance]) -> tuple[float, str, float]:
    if not dev:
        return math.nan, "semer", math.nan
    pieces = _viterbi_ids(dev, bundle.vocab)
    loss, errs, denom = 0.0, 0, 0
    y = _intent_ids(dev, bundle.intents)
    for u, p, yi, (il, sl) in zip(dev, pieces, y, nlu_batch(bundle, pieces)):
        _, interp, probs = _interpret(p, il, sl, bundle.vocab, bundle.intents, bundle.tags)
        loss -= math.log(max(probs[yi], 1e-300))
        st = semer(u.interpretation(), interp)
        errs += st.errors
        denom += st.denominator
    return loss / len(dev), "semer", errs / denom


# --- joint ---------------------------------------------------------------------------------

def check_stages(names: Sequence[str]) -> None:
    if not names:
        raise ValueError("no training stages given")
    pos = []
    for n in names:
        if n not in STAGES:
            raise ValueError(f"unknown stage {n!r}; expected one of {', '.join(STAGES)}")
        pos.append(STAGES.index(n))
    if any(b <= a for a, b in zip(pos, pos[1:])):
        raise ValueError(f"stages must appear at most once and in the order {' -> '.join(STAGES)}")


def train_joint(train: Sequence[Utterance], dev: Sequence[Utterance],
                stages: Sequence[tuple[str, TrainConfig]], vocab: SubwordVocab,
                cfg: ModelConfig | None = None, pretrained_las: Bundle | None = None,
                intents: Sequence[str] | None = None, tags: Sequence[str] | None = None,
                report: TrainReport | None = None, init: Bundle | None = None
                ) -> tuple[Bundle, TrainReport]:
    """Run the requested stages in order.

    ``asr`` trains the recognizer alone; ``nlu_frozen_asr`` trains only the NLU
    on teacher-forced traces with the recognizer held constant; ``joint``
    updates everything against the weighted sum of the three losses."""
    check_stages([s for s, _ in stages])
    _check(train, "training")
    li, lt = label_sets(train)
    intents = list(intents) if intents is not None else li
    tags = list(tags) if tags is not None else lt
    if init is not None:
        bundle = init
    else:
        cfg = pretrained_las.cfg if pretrained_las is not None and cfg is None else cfg or ModelConfig()
        bundle = build("joint", cfg, vocab, intents, tags)
    if pretrained_las is not None:
        if len(pretrained_las.vocab) != len(vocab):
            raise ValueError("pretrained recognizer uses a different vocabulary size")
        bundle.params.load_state(pretrained_las.params.state(), strict=False)
    model = bundle.model
    y = _intent_ids(train, bundle.intents)
    report = report or TrainReport("joint")
    t0 = time.perf_counter()
    for name, tcfg in stages:
        def prepare(rng, tcfg=tcfg):
            segs = _sampled_pieces(train, bundle.vocab, tcfg.alpha, rng)
            return _piece_targets(train, bundle.vocab, segs, bundle.tags)

        if name == "asr":
            def loss_fn(g, idx, data, seeds, tcfg=tcfg):
                pieces, _ = data
                loss, _, _ = las_loss(g, model.las, _features(train, idx, seeds, tcfg),
                                      [pieces[i] for i in idx], tcfg.smoothing)
                return loss
            update = model.asr_params()
            dev_fn = lambda tcfg=tcfg: dev_las(model.las, bundle.vocab, dev, tcfg)  # noqa: E731
        else:
            frozen = name == "nlu_frozen_asr"

            def loss_fn(g, idx, data, seeds, tcfg=tcfg, frozen=frozen):
                pieces, targets = data
                w = dataclasses.replace(tcfg, w_subword=0.0) if frozen else tcfg
                loss, _ = joint_loss(g, model, _features(train, idx, seeds, tcfg),
                                     [pieces[i] for i in idx], [targets[i] for i in idx], y[idx], w,
                                     asr_trainable=not frozen)
                return loss
            update = model.nlu_params() if frozen else list(bundle.params)
            dev_fn = lambda: dev_joint(bundle, dev)  # noqa: E731
        _fit(name, bundle, train, tcfg, update, prepare, loss_fn, dev_fn, report)
    report.wall_clock += time.perf_counter() - t0
    return bundle, report


def joint_greedy_batch(bundle: Bundle, utts: Sequence[Utterance], batch_size: int = 32):
    """Greedy transcript and interpretation for each utterance."""
    model = bundle.model
    out = []
    for idx in _chunks(len(utts), batch_size):
        results = greedy_batch(model.las, [utts[i].features for i in idx])
        lengths = np.array([len(r.pieces) for r in results])
        m = int(lengths.max())
        g = Graph(grad_enabled=False)
        if m:
            H, E = results[0].h.shape[1], results[0].e.shape[1]
            hs = np.zeros((len(idx), m, H))
            es = np.zeros((len(idx), m, E))
            for b, r in enumerate(results):
                n = len(r.pieces)
                hs[b, :n] = r.h[1:n + 1]
                es[b, :n] = r.e[1:n + 1]
            xs = interface_inputs(g, [g.constant(hs[:, s]) for s in range(m)],
                                  [g.constant(es[:, s]) for s in range(m)])
        else:
            xs = g.constant(np.zeros((len(idx), 0, model.nlu.d_in)))
        il, sl = model.nlu.forward(g, xs, lengths, trainable=False)
        for b, r in enumerate(results):
            out.append(_interpret(r.pieces, il.data[b], sl.data[b, :lengths[b]],
                                  bundle.vocab, bundle.intents, bundle.tags))
    return out


def dev_joint(bundle: Bundle, dev: Sequence[Utterance]) -> tuple[float, str, float]:
    if not dev:
        return math.nan, "semer", math.nan
    errs = denom = 0
    loss = 0.0
    y = _intent_ids(dev, bundle.intents)
    for u, yi, (_, interp, probs) in zip(dev, y, joint_greedy_batch(bundle, dev)):
        loss -= math.log(max(probs[yi], 1e-300))
        st = semer(u.interpretation(), interp)
        errs += st.errors
        denom += st.denominator
    return loss / len(dev), "semer", errs / denom
