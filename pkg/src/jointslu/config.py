"""Model and training configuration, loadable from flat ``key=value`` files.

Keys of both dataclasses share one namespace, so a single file configures a
whole run.  Unknown keys are an error.
"""
from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, fields
from pathlib import Path


class ConfigError(ValueError):
    pass


@dataclass
class ModelConfig:
    feat_dim: int = 64
    enc_hidden: int = 64
    enc_layers: int = 2
    dec_hidden: int = 128
    dec_layers: int = 1
    att_heads: int = 2
    att_depth: int = 32
    att_out: int = 96
    emb_dim: int = 32
    nlu_hidden: int = 64
    nlu_layers: int = 2
    intent_hidden: int = 128
    a2i_hidden: int = 64
    a2i_layers: int = 2
    init_seed: int = 0


# sizes reported for the fleet-scale models; kept for reference runs only
FLEET_PROFILE = ModelConfig(enc_hidden=512, enc_layers=5, dec_hidden=1024, dec_layers=2,
                            att_heads=4, att_depth=256, att_out=768, emb_dim=256,
                            nlu_hidden=256, nlu_layers=2, intent_hidden=512,
                            a2i_hidden=256, a2i_layers=2)


@dataclass
class TrainConfig:
    lr: float = 1e-3
    epochs: int = 10
    batch_size: int = 16
    smoothing: float = 0.1
    w_subword: float = 1.0
    w_intent: float = 1.0
    w_slot: float = 1.0
    time_masks: int = 1
    time_mask_width: int = 2
    feat_masks: int = 1
    feat_mask_width: int = 8
    alpha: float = 0.5
    clip: float = 5.0
    seed: int = 1
    keep_best: bool = True
    max_steps: int = 0

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        for name in ("w_subword", "w_intent", "w_slot"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if self.batch_size < 1 or self.epochs < 0:
            raise ConfigError("batch_size must be >= 1 and epochs >= 0")
        if self.alpha <= 0:
            raise ConfigError("alpha must be positive")
        if not 0 <= self.smoothing < 1:
            raise ConfigError("smoothing must be in [0, 1)")


# learning rates per model kind; the recognizer needs a larger step than a
# plain x10 scaling of the fleet value to converge within minutes
DESK_LR = {"a2i": 1e-2, "las": 3e-3, "nlu": 1e-3, "joint": 1e-3}
FLEET_LR = {"a2i": 1e-3, "las": 1e-5, "nlu": 1e-4, "joint": 1e-5}
STAGE_NAMES = ("asr", "nlu_frozen_asr", "joint")


def _coerce(f: dataclasses.Field, raw: str):
    kind = f.type if isinstance(f.type, type) else {"int": int, "float": float, "bool": bool, "str": str}[f.type]
    if kind is bool:
        if raw.lower() in ("1", "true", "yes"):
            return True
        if raw.lower() in ("0", "false", "no"):
            return False
        raise ConfigError(f"{f.name}: expected a boolean, got {raw!r}")
    try:
        return kind(raw)
    except ValueError as exc:
        raise ConfigError(f"{f.name}: cannot parse {raw!r} as {kind.__name__}") from exc


def parse_overrides(items: list[str] | dict, model: ModelConfig | None = None,
                    train: TrainConfig | None = None) -> tuple[ModelConfig, TrainConfig]:
    """Apply ``key=value`` items on top of the given (or default) configs."""
    model = dataclasses.replace(model) if model else ModelConfig()
    train_kwargs = dataclasses.asdict(train) if train else {}
    mfields = {f.name: f for f in fields(ModelConfig)}
    tfields = {f.name: f for f in fields(TrainConfig)}
    pairs = items.items() if isinstance(items, dict) else [_split(s) for s in items]
    for key, raw in pairs:
        raw = str(raw)
        if key in mfields:
            setattr(model, key, _coerce(mfields[key], raw))
        elif key in tfields:
            train_kwargs[key] = _coerce(tfields[key], raw)
        else:
            raise ConfigError(f"unknown config key {key!r}")
    return model, TrainConfig(**train_kwargs)


def _split(item: str) -> tuple[str, str]:
    key, sep, value = item.partition("=")
    if not sep or not key.strip():
        raise ConfigError(f"expected key=value, got {item!r}")
    return key.strip(), value.strip()


def read_config_lines(text: str) -> list[str]:
    out = []
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key=value")
        out.append(line)
    return out


def load_config(path: str | os.PathLike | None, overrides: list[str] = ()) -> tuple[ModelConfig, TrainConfig]:
    lines = read_config_lines(Path(path).read_text(encoding="utf-8")) if path else []
    return parse_overrides(list(lines) + list(overrides))


def load_stage_configs(path: str | os.PathLike | None, overrides: list[str] = ()
                       ) -> tuple[ModelConfig, list[tuple[str, TrainConfig]]]:
    """Joint-training config: plain keys apply to every stage, ``<stage>.key``
    to one stage, and ``stages=a,b`` picks which stages run (default: all)."""
    lines = read_config_lines(Path(path).read_text(encoding="utf-8")) if path else []
    shared, per_stage = [], {name: [] for name in STAGE_NAMES}
    stages = list(STAGE_NAMES)
    for item in list(lines) + list(overrides):
        key, value = _split(item)
        if key == "stages":
            stages = [v.strip() for v in value.split(",") if v.strip()]
            unknown = [v for v in stages if v not in STAGE_NAMES]
            if unknown:
                raise ConfigError(f"unknown stage {unknown[0]!r}")
            continue
        head, dot, rest = key.partition(".")
        if dot and head in STAGE_NAMES:
            per_stage[head].append(f"{rest}={value}")
        elif dot:
            raise ConfigError(f"unknown stage prefix in {key!r}")
        else:
            shared.append(f"{key}={value}")
    model, base = parse_overrides(shared)
    out = []
    for name in stages:
        m, t = parse_overrides(per_stage[name], model, base)
        if m != model:
            raise ConfigError(f"model keys cannot differ per stage ({name})")
        out.append((name, t))
    return model, out


def config_problems(text: str) -> list[str]:
    """Line-numbered problems of a config file (plain or per-stage keys)."""
    problems = []
    mfields = {f.name: f for f in fields(ModelConfig)}
    tfields = {f.name: f for f in fields(TrainConfig)}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            problems.append(f"line {n}: expected key=value")
            continue
        if key == "stages":
            bad = [v for v in value.split(",") if v.strip() not in STAGE_NAMES]
            if bad:
                problems.append(f"line {n}: unknown stage {bad[0].strip()!r}")
            continue
        head, dot, rest = key.partition(".")
        if dot:
            if head not in STAGE_NAMES:
                problems.append(f"line {n}: unknown stage prefix {head!r}")
                continue
            key = rest
        f = mfields.get(key) or tfields.get(key)
        if f is None:
            problems.append(f"line {n}: unknown config key {key!r}")
            continue
        try:
            _coerce(f, value)
        except ConfigError as exc:
            problems.append(f"line {n}: {exc}")
    if not problems:
        try:
            load_stage_configs(None, read_config_lines(text))
        except ConfigError as exc:
            problems.append(str(exc))
    return problems


def dump_config(model: ModelConfig, train: TrainConfig | None = None) -> str:
    d = dataclasses.asdict(model)
    if train is not None:
        d.update(dataclasses.asdict(train))
    return "".join(f"{k}={v}\n" for k, v in d.items())
