"""Experiment configuration: a JSON document with fixed sections.

Every field has a default, unknown keys are rejected, and the materialized
form (defaults filled in) is what gets echoed next to each run's outputs.
"""
import json
from dataclasses import asdict, dataclass, field, fields, replace

from .dsmc import DsmcConfig
from .errors import InvalidConfig
from .kernel import KitiConfig
from .net import NetworkSpec, TrainConfig

SECTIONS = ("kiti", "dsmc", "network", "train", "sweep", "check", "output_dir")


@dataclass(frozen=True)
class NetworkSection:
    input_dim: int = 5
    hidden_dim: int = 50
    output_dim: int = 1
    depth: int = 3
    activation: str = "relu"
    skip_connections: bool = False
    kiti_layers: tuple = (2,)
    gamma: float = 4.0


@dataclass(frozen=True)
class TrainSection:
    epochs: int = 100
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    batch: int | None = None
    seed: int = 0
    checkpoints: tuple = (1, 10, 50, 100)
    n_samples: int = 80
    data_seed: int = 0
    threshold: float = 0.95
    analyze_layers: tuple = (1,)

    def __post_init__(self):
        if not 0.0 < self.threshold < 1.0:
            raise InvalidConfig("train.threshold must lie in (0, 1)")
        if self.n_samples < 1:
            raise InvalidConfig("train.n_samples must be >= 1")


@dataclass(frozen=True)
class SweepSection:
    n_divide: tuple = (1, 2, 5)
    coll_coef: tuple = (0.0, 0.5, 0.9)
    seeds: tuple = (0,)

    def __post_init__(self):
        if not self.n_divide or not self.coll_coef or not self.seeds:
            raise InvalidConfig("sweep grids must be non-empty")


@dataclass(frozen=True)
class CheckSection:
    trials: int = 200
    gradient_points: int = 100

    def __post_init__(self):
        if self.trials < 1 or self.gradient_points < 1:
            raise InvalidConfig("check.trials and check.gradient_points must be >= 1")


@dataclass(frozen=True)
class ExperimentConfig:
    kiti: KitiConfig = field(default_factory=KitiConfig)
    dsmc: DsmcConfig = field(default_factory=DsmcConfig)
    network: NetworkSection = field(default_factory=NetworkSection)
    train: TrainSection = field(default_factory=TrainSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    check: CheckSection = field(default_factory=CheckSection)
    output_dir: str = "runs/out"

    def network_spec(self, kiti=None, **overrides):
        values = {**asdict(self.network), **overrides}
        return NetworkSpec(kiti=kiti or self.kiti, **values)

    def train_config(self, **overrides):
        t = self.train
        values = dict(epochs=t.epochs, learning_rate=t.learning_rate, optimizer=t.optimizer,
                      batch=t.batch, seed=t.seed, checkpoints=t.checkpoints)
        return TrainConfig(**{**values, **overrides})

    def with_seed(self, seed):
        return replace(
            self,
            kiti=replace(self.kiti, seed=seed),
            dsmc=replace(self.dsmc, seed=seed),
            train=replace(self.train, seed=seed, data_seed=seed),
            sweep=replace(self.sweep, seeds=(seed,)),
        )

    def to_dict(self):
        return _plain(asdict(self))


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


_TUPLE_FIELDS = {"box", "cells_per_axis", "kiti_layers", "checkpoints", "analyze_layers",
                 "n_divide", "coll_coef", "seeds"}


def _build(cls, section, data):
    if not isinstance(data, dict):
        raise InvalidConfig(f"section {section!r} must be an object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise InvalidConfig(f"unknown keys in {section!r}: {', '.join(unknown)}")
    values = {}
    for k, v in data.items():
        if isinstance(v, list):
            if k not in _TUPLE_FIELDS:
                raise InvalidConfig(f"{section}.{k} must not be a list")
            v = tuple(v)
        values[k] = v
    try:
        return cls(**values)
    except InvalidConfig:
        raise
    except (TypeError, ValueError) as exc:
        raise InvalidConfig(f"invalid value in {section!r}: {exc}") from exc


_SECTION_TYPES = {
    "kiti": KitiConfig,
    "dsmc": DsmcConfig,
    "network": NetworkSection,
    "train": TrainSection,
    "sweep": SweepSection,
    "check": CheckSection,
}


def from_dict(data):
    if not isinstance(data, dict):
        raise InvalidConfig("configuration must be a JSON object")
    unknown = sorted(set(data) - set(SECTIONS))
    if unknown:
        raise InvalidConfig(f"unknown top-level keys: {', '.join(unknown)}")
    parts = {name: _build(cls, name, data.get(name, {})) for name, cls in _SECTION_TYPES.items()}
    out = data.get("output_dir", ExperimentConfig.output_dir)
    if not isinstance(out, str) or not out:
        raise InvalidConfig("output_dir must be a non-empty string")
    cfg = ExperimentConfig(output_dir=out, **parts)
    # cross-section constraints surface now, not mid-run
    try:
        cfg.network_spec()
        cfg.train_config()
    except (TypeError, ValueError) as exc:
        raise InvalidConfig(str(exc)) from exc
    bad = [l for l in cfg.train.analyze_layers if not 1 <= l <= cfg.network.depth - 1]
    if bad:
        raise InvalidConfig(f"train.analyze_layers {bad} must be hidden layers 1..{cfg.network.depth - 1}")
    return cfg


def load(path):
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise InvalidConfig(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InvalidConfig(f"config {path} is not valid JSON: {exc}") from exc
    return from_dict(data)


def dumps(cfg):
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n"
