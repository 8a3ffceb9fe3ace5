"""Run configuration: dataclasses, strict JSON parsing, canonical digests.

A run config is one JSON document with four sections (dataset, model, train,
probe). Unknown keys anywhere are a hard error; a typo in a hyperparameter
name must fail loudly, not silently train with a default.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace

from .losses import LOSS_KINDS


class ConfigError(ValueError):
    """Itemized configuration problems, one message per offending key."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass(frozen=True)
class DatasetSpec:
    n_classes: int = 5
    input_dim: int = 20
    n_train: int = 5000
    n_test: int = 1000
    cluster_spread: float = 1.0
    mean_radius: float = 2.0
    seed: int = 0

    def validate(self) -> list[str]:
        problems = []
        if self.n_classes < 2:
            problems.append("dataset.n_classes: must be >= 2")
        if self.input_dim < 2:
            problems.append("dataset.input_dim: must be >= 2")
        if self.n_train < self.n_classes:
            problems.append("dataset.n_train: must be >= n_classes")
        if self.n_test < self.n_classes:
            problems.append("dataset.n_test: must be >= n_classes")
        if self.cluster_spread <= 0:
            problems.append("dataset.cluster_spread: must be > 0")
        if self.mean_radius <= 0:
            problems.append("dataset.mean_radius: must be > 0")
        if self.seed < 0:
            problems.append("dataset.seed: must be >= 0")
        return problems


@dataclass(frozen=True)
class ModelConfig:
    trunk: tuple[int, ...] = (64, 32)
    proj_hidden: int | None = None  # defaults to the trunk output width
    embed_dim: int = 16

    @property
    def proj_hidden_dim(self) -> int:
        return self.proj_hidden if self.proj_hidden is not None else self.trunk[-1]

    @property
    def feature_dim(self) -> int:
        return self.trunk[-1]

    def validate(self) -> list[str]:
        problems = []
        if len(self.trunk) < 1 or any(w < 1 for w in self.trunk):
            problems.append("model.trunk: must be a non-empty list of widths >= 1")
        if self.proj_hidden is not None and self.proj_hidden < 1:
            problems.append("model.proj_hidden: must be >= 1 (or null)")
        if self.embed_dim < 1:
            problems.append("model.embed_dim: must be >= 1")
        return problems


@dataclass(frozen=True)
class AugConfig:
    # Deliberately gentle views. The label-ratio effect lives here: with weak
    # augmentation the instance-matching task saturates early, so unlabeled
    # training plateaus while label-driven positives keep supplying signal.
    noise_std: float = 0.15
    dropout_p: float = 0.0

    def validate(self) -> list[str]:
        problems = []
        if self.noise_std < 0:
            problems.append("train.aug.noise_std: must be >= 0")
        if not 0.0 <= self.dropout_p < 1.0:
            problems.append("train.aug.dropout_p: must lie in [0, 1)")
        return problems


@dataclass(frozen=True)
class TrainConfig:
    tau: float = 0.2
    momentum_m: float = 0.999
    queue_size: int = 512
    label_ratio: float = 1.0
    batch_size: int = 64
    epochs: int = 30
    lr: float = 0.06
    sgd_momentum: float = 0.9
    weight_decay: float = 5e-4
    aug: AugConfig = field(default_factory=AugConfig)
    loss: str = "unicon"
    seed: int = 0

    def validate(self) -> list[str]:
        problems = []
        if self.tau <= 0:
            problems.append("train.tau: must be > 0")
        if not 0.0 <= self.momentum_m <= 1.0:
            problems.append("train.momentum_m: must lie in [0, 1]")
        if self.queue_size < 1:
            problems.append("train.queue_size: must be >= 1")
        if not 0.0 <= self.label_ratio <= 1.0:
            problems.append("train.label_ratio: must lie in [0, 1]")
        if self.batch_size < 1:
            problems.append("train.batch_size: must be >= 1")
        elif self.batch_size > self.queue_size:
            problems.append("train.batch_size: must be <= queue_size")
        if self.epochs < 0:
            problems.append("train.epochs: must be >= 0")
        if self.lr <= 0:
            problems.append("train.lr: must be > 0")
        if not 0.0 <= self.sgd_momentum < 1.0:
            problems.append("train.sgd_momentum: must lie in [0, 1)")
        if self.weight_decay < 0:
            problems.append("train.weight_decay: must be >= 0")
        if self.loss not in LOSS_KINDS:
            problems.append(f"train.loss: must be one of {', '.join(LOSS_KINDS)}")
        if self.seed < 0:
            problems.append("train.seed: must be >= 0")
        problems.extend(self.aug.validate())
        return problems


@dataclass(frozen=True)
class ProbeConfig:
    epochs: int = 40
    lr: float = 0.5
    batch_size: int = 128
    knn_k: int = 15
    knn_temperature: float | None = None  # None = unweighted neighbor vote

    def validate(self) -> list[str]:
        problems = []
        if self.epochs < 1:
            problems.append("probe.epochs: must be >= 1")
        if self.lr <= 0:
            problems.append("probe.lr: must be > 0")
        if self.batch_size < 1:
            problems.append("probe.batch_size: must be >= 1")
        if self.knn_k < 1:
            problems.append("probe.knn_k: must be >= 1")
        if self.knn_temperature is not None and self.knn_temperature <= 0:
            problems.append("probe.knn_temperature: must be > 0 (or null)")
        return problems


@dataclass(frozen=True)
class RunConfig:
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    probe: ProbeConfig = field(default_factory=ProbeConfig)

    def validate(self) -> list[str]:
        return (
            self.dataset.validate()
            + self.model.validate()
            + self.train.validate()
            + self.probe.validate()
        )


_INT = "int"
_FLOAT = "float"
_STR = "str"
_INT_TUPLE = "int_tuple"
_OPT_INT = "opt_int"
_OPT_FLOAT = "opt_float"

_FIELD_KINDS = {
    DatasetSpec: {
        "n_classes": _INT,
        "input_dim": _INT,
        "n_train": _INT,
        "n_test": _INT,
        "cluster_spread": _FLOAT,
        "mean_radius": _FLOAT,
        "seed": _INT,
    },
    ModelConfig: {"trunk": _INT_TUPLE, "proj_hidden": _OPT_INT, "embed_dim": _INT},
    AugConfig: {"noise_std": _FLOAT, "dropout_p": _FLOAT},
    TrainConfig: {
        "tau": _FLOAT,
        "momentum_m": _FLOAT,
        "queue_size": _INT,
        "label_ratio": _FLOAT,
        "batch_size": _INT,
        "epochs": _INT,
        "lr": _FLOAT,
        "sgd_momentum": _FLOAT,
        "weight_decay": _FLOAT,
        "aug": AugConfig,
        "loss": _STR,
        "seed": _INT,
    },
    ProbeConfig: {
        "epochs": _INT,
        "lr": _FLOAT,
        "batch_size": _INT,
        "knn_k": _INT,
        "knn_temperature": _OPT_FLOAT,
    },
}


def _coerce(kind, value, where: str, problems: list[str]):
    if kind == _INT:
        if type(value) is int:
            return value
        problems.append(f"{where}: expected an integer")
    elif kind == _FLOAT:
        if type(value) in (int, float):
            return float(value)
        problems.append(f"{where}: expected a number")
    elif kind == _STR:
        if isinstance(value, str):
            return value
        problems.append(f"{where}: expected a string")
    elif kind == _OPT_INT:
        if value is None or type(value) is int:
            return value
        problems.append(f"{where}: expected an integer or null")
    elif kind == _OPT_FLOAT:
        if value is None:
            return None
        if type(value) in (int, float):
            return float(value)
        problems.append(f"{where}: expected a number or null")
    elif kind == _INT_TUPLE:
        if isinstance(value, (list, tuple)) and all(type(v) is int for v in value):
            return tuple(value)
        problems.append(f"{where}: expected a list of integers")
    return None


def _section_from_dict(cls, data, where: str, problems: list[str]):
    if not isinstance(data, dict):
        problems.append(f"{where}: expected an object")
        return cls()
    kinds = _FIELD_KINDS[cls]
    kwargs = {}
    for key, value in data.items():
        if key not in kinds:
            problems.append(f"{where}.{key}: unknown key")
            continue
        kind = kinds[key]
        if isinstance(kind, type):  # nested section
            kwargs[key] = _section_from_dict(kind, value, f"{where}.{key}", problems)
        else:
            coerced = _coerce(kind, value, f"{where}.{key}", problems)
            if coerced is not None or kind in (_OPT_INT, _OPT_FLOAT):
                kwargs[key] = coerced
    return cls(**kwargs)


_SECTIONS = {
    "dataset": DatasetSpec,
    "model": ModelConfig,
    "train": TrainConfig,
    "probe": ProbeConfig,
}


def config_from_dict(data: dict) -> RunConfig:
    """Parse and validate a config document; raises ConfigError with every
    problem found, not just the first."""
    problems: list[str] = []
    if not isinstance(data, dict):
        raise ConfigError(["config: expected a JSON object"])
    sections = {}
    for key, value in data.items():
        if key not in _SECTIONS:
            problems.append(f"{key}: unknown section")
            continue
        sections[key] = _section_from_dict(_SECTIONS[key], value, key, problems)
    cfg = RunConfig(**sections)
    problems.extend(cfg.validate())
    if problems:
        raise ConfigError(problems)
    return cfg


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError([f"config: invalid JSON ({exc})"]) from exc
    return config_from_dict(data)


def config_to_dict(cfg: RunConfig) -> dict:
    """JSON-native mirror of the config (tuples become lists), so a value
    survives a dump/load round trip unchanged."""
    return json.loads(json.dumps(asdict(cfg)))


def canonical_json(data: dict) -> str:
    """Key-order-insensitive serialization used for digests and headers."""
    return json.dumps(data, sort_keys=True, separators=(",", ":"))


def config_digest(cfg: RunConfig) -> str:
    return hashlib.sha256(canonical_json(config_to_dict(cfg)).encode()).hexdigest()


def run_id(cfg: RunConfig) -> str:
    return f"s{cfg.train.seed}-{config_digest(cfg)[:12]}"


def with_train(cfg: RunConfig, **overrides) -> RunConfig:
    """Copy of cfg with train-section fields replaced."""
    return replace(cfg, train=replace(cfg.train, **overrides))


__all__ = [
    "AugConfig",
    "ConfigError",
    "DatasetSpec",
    "ModelConfig",
    "ProbeConfig",
    "RunConfig",
    "TrainConfig",
    "canonical_json",
    "config_digest",
    "config_from_dict",
    "config_to_dict",
    "load_config",
    "run_id",
    "with_train",
]
