"""Command-line entry point: ``jointslu <verb> [options]``.

Exit status: 0 success, 1 usage error, 2 data or validation error,
3 acceptance failure (``experiment`` only).
"""
from __future__ import annotations

import argparse
import dataclasses
import itertools
import json
import logging
import os
import sys
from pathlib import Path

from . import metrics
from .autodiff import CheckpointError
from .config import ConfigError, config_problems, load_config, load_stage_configs
from .corpus import (AnnotationError, CorpusFormatError, Grammar, GrammarError, generate_corpus,
                     load_corpus, save_corpus, split_corpus)
from .corpus.io import corpus_problems
from .models import nbest, store
from .pipeline import decode_corpus
from .tokenizer import SubwordVocab, VocabError, segment_sample, segment_viterbi, train_unigram

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_ACCEPTANCE = 0, 1, 2, 3
MAX_DIAGNOSTICS = 20

log = logging.getLogger("jointslu")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


class _StepFilter(logging.Filter):
    def __init__(self):
        super().__init__()
        self.counter = itertools.count(1)

    def filter(self, record):
        record.step = next(self.counter)
        return True


def _setup_logging() -> None:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("log=%(step)d %(message)s"))
    handler.addFilter(_StepFilter())
    log.handlers[:] = [handler]
    log.setLevel(logging.INFO)
    log.propagate = False


def _out_root(args) -> Path:
    return Path(args.out) if args.out else Path(os.environ.get("SLUF_OUT", "."))


def _log_config(verb: str, **items) -> None:
    log.info("verb=%s %s", verb, " ".join(f"{k}={v}" for k, v in items.items()))


# --- verbs -------------------------------------------------------------------------

def cmd_gen_data(args) -> int:
    grammar = Grammar.load(args.grammar) if args.grammar else Grammar.default()
    out = _out_root(args)
    out.mkdir(parents=True, exist_ok=True)
    _log_config("gen-data", n=args.n, seed=args.seed, ood_fraction=args.ood_fraction, out=out)
    utts = generate_corpus(grammar, args.n, args.seed, args.ood_fraction)
    for name, part in zip(("train", "dev", "eval"), split_corpus(utts)):
        save_corpus(out / name, part)
    (out / "grammar.json").write_text(grammar.dumps(), encoding="utf-8")
    return EXIT_OK


def cmd_train_tokenizer(args) -> int:
    utts = load_corpus(args.corpus)
    out = Path(args.out) if args.out else _out_root(args) / "vocab.txt"
    _log_config("train-tokenizer", corpus=args.corpus, vocab_size=args.vocab_size, out=out)
    out.parent.mkdir(parents=True, exist_ok=True)
    train_unigram([u.transcript for u in utts], args.vocab_size).save(out)
    return EXIT_OK


def cmd_tokenize(args) -> int:
    vocab = SubwordVocab.load(args.vocab)
    lines = [args.text] if args.text is not None else sys.stdin.read().splitlines()
    for k, line in enumerate(lines):
        if args.sample:
            seg = segment_sample(line, vocab, args.alpha, [args.seed, k])
        else:
            seg = segment_viterbi(line, vocab)
        print(" ".join(vocab.pieces[i] for i in seg.ids))
    return EXIT_OK


def cmd_train(args) -> int:
    from . import training
    out = _out_root(args)
    out.mkdir(parents=True, exist_ok=True)
    seed_items = [f"seed={args.seed}", f"init_seed={args.seed}"] if args.seed is not None else []
    overrides = seed_items + list(args.set or [])
    train = load_corpus(args.train)
    dev = load_corpus(args.dev) if args.dev else []
    vocab = SubwordVocab.load(args.vocab) if args.vocab else None
    if args.model != "a2i" and vocab is None:
        raise UsageError(f"--vocab is required for --model {args.model}")
    if args.model == "joint":
        mcfg, stages = load_stage_configs(args.config, overrides)
        _log_config("train", model="joint", stages=",".join(s for s, _ in stages),
                    **{k: v for k, v in dataclasses.asdict(mcfg).items()})
        for name, t in stages:
            _log_config("train", stage=name, **dataclasses.asdict(t))
        pre = store.load(args.pretrained, expect="las") if args.pretrained else None
        bundle, report = training.train_joint(train, dev, stages, vocab, mcfg, pretrained_las=pre)
    else:
        mcfg, tcfg = load_config(args.config, overrides)
        _log_config("train", model=args.model, **dataclasses.asdict(mcfg), **dataclasses.asdict(tcfg))
        if args.model == "a2i":
            bundle, report = training.train_audio_to_intent(train, dev, tcfg, mcfg)
        elif args.model == "las":
            bundle, report = training.train_las(train, dev, tcfg, vocab, mcfg)
        else:
            bundle, report = training.train_nlu(train, dev, tcfg, vocab, mcfg)
    store.save(out / f"{args.model}.ckpt", bundle)
    (out / f"{args.model}.report.json").write_text(report.to_json(), encoding="utf-8")
    (out / f"{args.model}.report.csv").write_text(report.to_csv(), encoding="utf-8")
    return EXIT_OK


def cmd_decode(args) -> int:
    model = store.load(args.model)
    nlu = store.load(args.nlu, expect="nlu") if args.nlu else None
    utts = load_corpus(args.corpus)
    out = Path(args.out) if args.out else _out_root(args) / "nbest.tsv"
    _log_config("decode", model=args.model, nlu=args.nlu, beam=args.beam, threads=args.threads, out=out)
    rows = decode_corpus(utts, model, args.beam, nlu, args.threads)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(nbest.dumps(rows), encoding="utf-8")
    return EXIT_OK


def _report(args, build) -> int:
    outputs = nbest.loads(Path(args.outputs).read_text(encoding="utf-8"))
    report = build(outputs, load_corpus(args.corpus))
    out = Path(args.out) if args.out else None
    if out is not None:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(metrics.dumps_report(report), encoding="utf-8")
    sys.stdout.write(metrics.summary(report))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    _log_config("evaluate", outputs=args.outputs, corpus=args.corpus, out=args.out)
    return _report(args, metrics.evaluate)


def cmd_oracle(args) -> int:
    _log_config("oracle", outputs=args.outputs, corpus=args.corpus, out=args.out)
    return _report(args, metrics.oracle_report)


def _seed_list(text: str) -> list[int]:
    if ".." in text:
        a, b = text.split("..", 1)
        return list(range(int(a), int(b) + 1))
    return [int(x) for x in text.split(",") if x.strip()]


def cmd_experiment(args) -> int:
    from .experiment import run_experiment
    try:
        seeds = _seed_list(args.seed or "1..5")
    except ValueError:
        raise UsageError(f"--seed expects a range like 1..5 or a list like 1,2,3, got {args.seed!r}") from None
    if not seeds:
        raise UsageError("no seeds given")
    out = _out_root(args)
    _log_config("experiment", seeds=",".join(map(str, seeds)), out=out, threads=args.threads)
    crits, _ = run_experiment(out, seeds, args.set or [], args.n, args.threads)
    for c in crits:
        print(c.line())
    return EXIT_OK if all(c.passed for c in crits) else EXIT_ACCEPTANCE


def diagnostics(path: Path) -> list[str]:
    """Schema problems of a grammar (.json), config (.cfg) or corpus (.tsv) file."""
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".json":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            return [f"line {exc.lineno}: invalid JSON ({exc.msg})"]
        try:
            Grammar.from_dict(data)
        except GrammarError as exc:
            return exc.problems
        return []
    if path.suffix == ".cfg":
        return config_problems(text)
    if path.suffix == ".tsv":
        return corpus_problems(text)
    return [f"unrecognised file type {path.suffix!r} (expected .json, .cfg or .tsv)"]


def cmd_validate(args) -> int:
    bad = 0
    for name in args.paths:
        problems = diagnostics(Path(name))
        for p in problems[:MAX_DIAGNOSTICS]:
            print(f"{name}: {p}")
        if len(problems) > MAX_DIAGNOSTICS:
            print(f"{name}: ... {len(problems) - MAX_DIAGNOSTICS} more")
        bad += bool(problems)
    return EXIT_DATA if bad else EXIT_OK


# --- parser ----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="jointslu", description="Desk-scale spoken language understanding toolkit.")
    sub = p.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    def common(sp, seed=True):
        sp.add_argument("--out", help="output file or directory (default: $SLUF_OUT or .)")
        if seed:
            sp.add_argument("--seed", type=int)
        return sp

    sp = common(sub.add_parser("gen-data", help="generate the synthetic corpus and its splits"), seed=False)
    sp.add_argument("--grammar", help="grammar JSON (default: shipped grammar)")
    sp.add_argument("--n", type=int, default=2500)
    sp.add_argument("--seed", type=int, default=7)
    sp.add_argument("--ood-fraction", type=float, default=0.0)
    sp.set_defaults(func=cmd_gen_data)

    sp = common(sub.add_parser("train-tokenizer", help="train a unigram subword vocabulary"), seed=False)
    sp.add_argument("--corpus", required=True, help="corpus stem (path without .tsv)")
    sp.add_argument("--vocab-size", type=int, default=200)
    sp.set_defaults(func=cmd_train_tokenizer)

    sp = sub.add_parser("tokenize", help="segment text into pieces")
    sp.add_argument("--vocab", required=True)
    sp.add_argument("--sample", action="store_true", help="sample instead of Viterbi")
    sp.add_argument("--alpha", type=float, default=0.5)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("text", nargs="?", help="text to segment (default: lines of stdin)")
    sp.set_defaults(func=cmd_tokenize)

    sp = common(sub.add_parser("train", help="train a model"))
    sp.add_argument("--model", required=True, choices=store.KINDS)
    sp.add_argument("--config", help="key=value config file")
    sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="config override (repeatable)")
    sp.add_argument("--train", required=True, help="training corpus stem")
    sp.add_argument("--dev", help="dev corpus stem")
    sp.add_argument("--vocab", help="subword vocabulary file")
    sp.add_argument("--pretrained", help="LAS checkpoint to start the joint model from")
    sp.set_defaults(func=cmd_train)

    sp = common(sub.add_parser("decode", help="write n-best hypotheses for a corpus"), seed=False)
    sp.add_argument("--model", required=True, help="checkpoint (a2i, las, nlu or joint)")
    sp.add_argument("--nlu", help="NLU checkpoint; with a las model runs the compositional pipeline")
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--beam", type=int, default=4)
    sp.add_argument("--threads", type=int, default=1)
    sp.set_defaults(func=cmd_decode)

    for verb, func, what in (("evaluate", cmd_evaluate, "score 1-best outputs"),
                             ("oracle", cmd_oracle, "score the n-best oracle")):
        sp = common(sub.add_parser(verb, help=what), seed=False)
        sp.add_argument("--outputs", required=True, help="n-best TSV")
        sp.add_argument("--corpus", required=True)
        sp.set_defaults(func=func)

    sp = common(sub.add_parser("experiment", help="run the acceptance experiment"), seed=False)
    sp.add_argument("--seed", help="seed range or list, e.g. 1..5 (default) or 1,3")
    sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override for every training config")
    sp.add_argument("--n", type=int, default=2500, help="corpus size")
    sp.add_argument("--threads", type=int, default=1)
    sp.set_defaults(func=cmd_experiment)

    sp = sub.add_parser("validate", help="check grammar, config or corpus files")
    sp.add_argument("paths", nargs="+")
    sp.set_defaults(func=cmd_validate)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _setup_logging()
    if getattr(args, "beam", 1) < 1 or getattr(args, "threads", 1) < 1:
        print("jointslu: error: --beam and --threads must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"jointslu: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, IsADirectoryError, CorpusFormatError, AnnotationError, GrammarError,
            CheckpointError, VocabError, nbest.NbestFormatError, ValueError) as exc:
        print(f"jointslu: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
