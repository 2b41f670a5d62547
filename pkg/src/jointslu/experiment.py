"""End-to-end desk-scale experiment: pinned corpus, every model family,
the compositional-versus-joint comparison over several seeds, the freeze
check, and the out-of-domain threshold sweep."""
from __future__ import annotations

import dataclasses
import json
import logging
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import load_config, load_stage_configs
from .corpus import Grammar, generate_corpus, split_corpus
from .corpus.grammar import Utterance
from .metrics import edit_stats, evaluate
from .models import beam_decode, false_accept_curve, joint_forward, las_greedy, ood_score
from .models import store
from .pipeline import decode_corpus, group, map_utterances
from .tokenizer import SubwordVocab, train_unigram
from .training import (label_sets, train_audio_to_intent, train_joint, train_las, train_nlu)

log = logging.getLogger("jointslu")

CORPUS_SEED = 7
CORPUS_SIZE = 2500
VOCAB_SIZE = 200
OOD_FRACTION = 0.2
SEEDS = (1, 2, 3, 4, 5)
THRESHOLDS = tuple(np.round(np.linspace(0.0, 1.0, 21), 2))
TIME_LIMIT = 30 * 60


def shipped_config(name: str) -> Path:
    return Path(str(resources.files("jointslu") / "configs" / f"{name}.cfg"))


@dataclass
class Split:
    train: list[Utterance]
    dev: list[Utterance]
    eval: list[Utterance]
    vocab: SubwordVocab


def pinned_split(n: int = CORPUS_SIZE, seed: int = CORPUS_SEED, ood_fraction: float = 0.0,
                 id_prefix: str = "utt", vocab_size: int = VOCAB_SIZE) -> Split:
    utts = generate_corpus(Grammar.default(), n, seed, ood_fraction, id_prefix)
    train, dev, ev = split_corpus(utts)
    vocab = train_unigram([u.transcript for u in train], vocab_size)
    return Split(train, dev, ev, vocab)


@dataclass
class Criterion:
    number: int
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.number}. {self.name}: {self.detail}"


@dataclass
class SeedResult:
    seed: int
    las_wer: float
    comp_semer: float
    joint_semer: float
    joint_wer: float
    freeze_exact: bool
    seconds: dict[str, float] = field(default_factory=dict)


def _with_seed(overrides: Sequence[str], seed: int) -> list[str]:
    return [f"seed={seed}", f"init_seed={seed}", *overrides]


def run_seed(seed: int, data: Split, out: Path | None, overrides: Sequence[str] = (),
             threads: int = 1) -> tuple[SeedResult, dict]:
    """LAS, text NLU and the joint model for one seed, scored on the eval split."""
    ov = _with_seed(overrides, seed)
    secs = {}
    t = time.perf_counter()
    mcfg, tcfg = load_config(shipped_config("las"), ov)
    las, _ = train_las(data.train, data.dev, tcfg, data.vocab, mcfg)
    secs["las"] = time.perf_counter() - t
    t = time.perf_counter()
    mcfg, tcfg = load_config(shipped_config("nlu"), ov)
    nlu, _ = train_nlu(data.train, data.dev, tcfg, data.vocab, mcfg)
    secs["nlu"] = time.perf_counter() - t

    t = time.perf_counter()
    mcfg, stages = load_stage_configs(shipped_config("joint"), ov)
    stages = [s for s in stages if s[0] != "asr"]   # stage 1 is the LAS just trained
    before = las.params.state()
    joint, report = train_joint(data.train, data.dev, stages[:1], data.vocab, mcfg, pretrained_las=las,
                                intents=nlu.intents, tags=nlu.tags)
    after = {p.name: p.value for p in joint.model.asr_params()}
    freeze = set(after) == set(before) and all(np.array_equal(before[k], after[k]) for k in before)
    joint, _ = train_joint(data.train, data.dev, stages[1:], data.vocab, init=joint, report=report)
    secs["joint"] = time.perf_counter() - t

    comp_rows = decode_corpus(data.eval, las, 4, nlu, threads)
    joint_rows = decode_corpus(data.eval, joint, 4, None, threads)
    comp = evaluate(group(comp_rows), data.eval)
    jrep = evaluate(group(joint_rows), data.eval)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        store.save(out / "las.ckpt", las)
        store.save(out / "nlu.ckpt", nlu)
        store.save(out / "joint.ckpt", joint)
    res = SeedResult(seed, comp["wer"], comp["semer"], jrep["semer"], jrep["wer"], freeze, secs)
    log.info("seed=%d las_wer=%.4f comp_semer=%.4f joint_semer=%.4f joint_wer=%.4f freeze=%s",
             seed, res.las_wer, res.comp_semer, res.joint_semer, res.joint_wer, freeze)
    return res, {"las": las, "nlu": nlu, "joint": joint, "comp_rows": comp_rows}


def check_decoding(las, rows, data: Split, n: int = 50) -> Criterion:
    same = all(beam_decode(las.model, u.features, 1)[0].pieces == las_greedy(las.model, u.features)
               for u in data.eval[:n])
    by_id = group(rows)
    worse = 0
    for u in data.eval:
        errs = [edit_stats(u.words, r.transcript.split()).errors for r in by_id[u.id]]
        worse += min(errs) > errs[0]
    return Criterion(5, "decoding", same and worse == 0,
                     f"beam1==greedy on {n}: {same}; utterances with oracle WER > 1-best: {worse}")


def run_ood(data: Split, out: Path | None, overrides: Sequence[str] = (), seed: int = 1,
            threads: int = 1) -> tuple[Criterion, dict]:
    """Wide joint model over in-domain plus out-of-domain intents; sweep the
    acceptance threshold on the wide eval split's out-of-domain utterances."""
    wide_data = pinned_split(len(data.train) + len(data.dev) + len(data.eval), CORPUS_SEED + 1,
                             OOD_FRACTION, "ood", len(data.vocab))
    ov = _with_seed(overrides, seed)
    mcfg, stages = load_stage_configs(shipped_config("joint"), ov)
    lcfg, ltcfg = load_config(shipped_config("las"), ov)
    las, _ = train_las(wide_data.train, wide_data.dev, ltcfg, wide_data.vocab, lcfg)
    stages = [s for s in stages if s[0] != "asr"]
    wide, _ = train_joint(wide_data.train, wide_data.dev, stages, wide_data.vocab, mcfg, pretrained_las=las)
    if out is not None:
        store.save(out / "joint_wide.ckpt", wide)
    in_domain = label_sets(data.train)[0]
    ood_eval = [u for u in wide_data.eval if u.intent not in set(in_domain)]
    ind_eval = [u for u in wide_data.eval if u.intent in set(in_domain)]
    scores = map_utterances(lambda u: ood_score(joint_forward(u.features, wide, 4)[0], wide.intents, in_domain),
                  ood_eval + ind_eval, threads)
    fa = false_accept_curve(scores[:len(ood_eval)], THRESHOLDS)
    fr = [1.0 - a for a in false_accept_curve(scores[len(ood_eval):], THRESHOLDS)] if ind_eval else []
    monotone = all(b <= a for a, b in zip(fa, fa[1:]))
    share = len(ood_eval) / len(wide_data.eval)
    crit = Criterion(9, "ood sweep", monotone and fa[-1] == 0.0,
                     f"ood share {share:.2f}; false accept {fa[0]:.3f} at 0 -> {fa[-1]:.3f} at 1; monotone {monotone}")
    return crit, {"thresholds": list(THRESHOLDS), "false_accept": fa, "false_reject": fr,
                  "ood_share": share}


def run_experiment(out_dir: str | Path | None = None, seeds: Sequence[int] = SEEDS,
                   overrides: Sequence[str] = (), n_utterances: int = CORPUS_SIZE,
                   threads: int = 1) -> tuple[list[Criterion], dict]:
    out = Path(out_dir) if out_dir is not None else None
    data = pinned_split(n_utterances)
    results: list[SeedResult] = []
    crits: list[Criterion] = []
    first = None
    for seed in seeds:
        res, models = run_seed(seed, data, out / f"seed{seed}" if out else None, overrides, threads)
        results.append(res)
        if first is None:
            first = models
    pinned = results[0]

    t = time.perf_counter()
    mcfg, tcfg = load_config(shipped_config("a2i"), _with_seed(overrides, seeds[0]))
    a2i, _ = train_audio_to_intent(data.train, data.dev, tcfg, mcfg)
    a2i_secs = time.perf_counter() - t
    a2i_icer = evaluate(group(decode_corpus(data.eval, a2i, threads=threads)), data.eval)["icer"]
    oracle = evaluate(group(decode_corpus(data.eval, first["nlu"], threads=threads)), data.eval)["semer"]
    if out is not None:
        store.save(out / "a2i.ckpt", a2i)

    crits.append(check_decoding(first["las"], first["comp_rows"], data))
    fast = max(a2i_secs, pinned.seconds["las"], pinned.seconds["nlu"]) < TIME_LIMIT
    crits.append(Criterion(6, "desk-scale learning",
                           a2i_icer < 0.10 and pinned.las_wer < 0.15 and oracle < 0.10 and fast,
                           f"a2i ICER {a2i_icer:.4f}; LAS WER {pinned.las_wer:.4f}; oracle NLU SemER {oracle:.4f}; "
                           f"minutes a2i {a2i_secs / 60:.1f} las {pinned.seconds['las'] / 60:.1f} "
                           f"nlu {pinned.seconds['nlu'] / 60:.1f}"))
    need = len(seeds) // 2 + 1
    sem_wins = sum(r.joint_semer <= r.comp_semer for r in results)
    wer_ok = sum(r.joint_wer - r.las_wer <= 0.01 for r in results)
    crits.append(Criterion(7, "joint direction of effect", sem_wins >= need and wer_ok >= need,
                           f"joint SemER <= compositional on {sem_wins}/{len(seeds)} seeds; "
                           f"stage-3 WER within +1% of LAS on {wer_ok}/{len(seeds)} seeds"))
    crits.append(Criterion(8, "freeze contract", all(r.freeze_exact for r in results),
                           f"ASR bit-identical after stage 2 on {sum(r.freeze_exact for r in results)}/{len(seeds)} seeds"))
    ood_crit, sweep = run_ood(data, out, overrides, seeds[0], threads)
    crits.append(ood_crit)
    summary = {
        "seeds": [dataclasses.asdict(r) for r in results],
        "a2i_icer": a2i_icer, "oracle_nlu_semer": oracle, "ood": sweep,
        "criteria": [dataclasses.asdict(c) for c in crits],
    }
    if out is not None:
        (out / "experiment.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    return crits, summary
