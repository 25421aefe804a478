"""Experiment configuration: dataclasses, validation, YAML (de)serialisation."""
import dataclasses
import typing
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import yaml

from .aggregation import FedMadeParams
from .attacks import AdversaryConfig
from .data import DESK_SMOTE, CsvSchema, SyntheticSpec, desk_scale_spec
from .errors import ConfigError

SCHEMA_VERSION = 1
ALGORITHMS = ("fedavg", "fedprox", "scaffold", "fedmade")


@dataclass
class ModelConfig:
    hidden: List[int] = field(default_factory=lambda: [50, 25])
    precision: str = "float64"

    @property
    def dtype(self):
        return np.float32 if self.precision == "float32" else np.float64


@dataclass
class SyntheticConfig:
    preset: str = "desk_scale"
    total_samples: int = 70_000
    num_clients: int = 20
    num_features: int = 47
    minority_victims: List[int] = field(default_factory=lambda: [2, 3])
    separation: float = 1.0
    minority_offset: float = 1.5
    noise: float = 0.12
    minority_noise: float = 0.12
    nested_minority: bool = True
    benign_offset: Optional[float] = 1.5
    spec: Optional[dict] = None  # explicit SyntheticSpec.to_dict(); overrides the preset

    def build(self, seed: int) -> SyntheticSpec:
        if self.spec is not None:
            return SyntheticSpec.from_dict(self.spec)
        if self.preset != "desk_scale":
            raise ConfigError(f"data.synthetic.preset: unknown preset {self.preset!r}")
        return desk_scale_spec(self.total_samples, self.num_clients, self.num_features,
                               tuple(self.minority_victims), seed, self.separation,
                               self.minority_offset, self.noise, self.minority_noise,
                               self.nested_minority, self.benign_offset)


@dataclass
class CsvConfig:
    train_path: str = ""
    test_path: Optional[str] = None
    feature_columns: List[str] = field(default_factory=list)
    label_column: str = "label"
    class_names: List[str] = field(default_factory=list)
    victim_map: Dict[int, List[int]] = field(default_factory=dict)
    num_clients: int = 1

    def schema(self) -> CsvSchema:
        return CsvSchema(self.feature_columns, self.label_column, self.class_names)


@dataclass
class DataConfig:
    source: str = "synthetic"
    synthetic: SyntheticConfig = field(default_factory=SyntheticConfig)
    csv: Optional[CsvConfig] = None
    test_fraction: float = 0.2
    binary: bool = False
    validation_per_class: int = 100
    holdout_cap: float = 0.2


@dataclass
class SmoteConfig:
    enabled: bool = True
    multipliers: Dict[int, float] = field(default_factory=lambda: dict(DESK_SMOTE))
    k: int = 5


@dataclass
class FedMadeSettings:
    eps: Optional[float] = None
    min_pts: int = 2
    iters: int = 500
    lr: float = 0.01
    tol: float = 1e-9
    patience: int = 100
    aux_per_class: int = 10
    resample_aux: bool = False

    def params(self) -> FedMadeParams:
        return FedMadeParams(self.eps, self.min_pts, self.iters, self.lr, self.tol, self.patience)


@dataclass
class ExperimentConfig:
    algorithm: str = "fedavg"
    name: Optional[str] = None
    schema_version: int = SCHEMA_VERSION
    rounds: int = 15
    sampling_rate: float = 1.0
    local_epochs: int = 2
    client_lr: float = 5e-4
    optimizer: str = "adam"
    batch_size: int = 64
    proximal_mu: float = 0.01
    model: ModelConfig = field(default_factory=ModelConfig)
    data: DataConfig = field(default_factory=DataConfig)
    smote: SmoteConfig = field(default_factory=SmoteConfig)
    adversary: AdversaryConfig = field(default_factory=AdversaryConfig)
    fedmade: FedMadeSettings = field(default_factory=FedMadeSettings)
    seed: int = 0
    workers: int = 1
    output_dir: Optional[str] = None

    @property
    def run_name(self) -> str:
        return self.name or self.algorithm

    def replace(self, **kw) -> "ExperimentConfig":
        return dataclasses.replace(self, **kw)


# DBSCAN radius for the desk-scale benchmark. The generic default
# 0.3*sqrt(N_C) merges every client into one cluster on this data.
DESK_EPS = 0.1


def desk_scale_config(algorithm: str, seed: int = 0, **overrides) -> ExperimentConfig:
    """20 clients, 7 classes, ~70k synthetic flows, R=15: the reference benchmark."""
    cfg = ExperimentConfig(algorithm=algorithm, seed=seed, fedmade=FedMadeSettings(eps=DESK_EPS))
    return validate(cfg.replace(**overrides))


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    if cfg.schema_version != SCHEMA_VERSION:
        raise ConfigError(f"schema_version: expected {SCHEMA_VERSION}, got {cfg.schema_version}")
    if cfg.algorithm not in ALGORITHMS:
        raise ConfigError(f"algorithm: must be one of {ALGORITHMS}, got {cfg.algorithm!r}")
    if cfg.rounds < 1:
        raise ConfigError("rounds: must be >= 1")
    if not 0.0 < cfg.sampling_rate <= 1.0:
        raise ConfigError(f"sampling_rate (gamma): must satisfy 0 < gamma <= 1, got {cfg.sampling_rate}")
    if cfg.local_epochs < 1:
        raise ConfigError("local_epochs: must be >= 1")
    if cfg.client_lr < 0:
        raise ConfigError("client_lr: must be non-negative")
    if cfg.optimizer not in ("adam", "sgd"):
        raise ConfigError("optimizer: must be 'adam' or 'sgd'")
    if cfg.batch_size < 1:
        raise ConfigError("batch_size: must be >= 1")
    if cfg.proximal_mu < 0:
        raise ConfigError("proximal_mu: must be non-negative")
    if cfg.workers < 1:
        raise ConfigError("workers: must be >= 1")
    if cfg.model.precision not in ("float64", "float32"):
        raise ConfigError("model.precision: must be float64 or float32")
    if any(h < 1 for h in cfg.model.hidden):
        raise ConfigError("model.hidden: widths must be positive")
    d = cfg.data
    if d.source not in ("synthetic", "csv"):
        raise ConfigError("data.source: must be 'synthetic' or 'csv'")
    if d.source == "csv" and (d.csv is None or not d.csv.train_path):
        raise ConfigError("data.csv.train_path: required when data.source is 'csv'")
    if not 0.0 <= d.test_fraction < 1.0:
        raise ConfigError("data.test_fraction: must lie in [0, 1)")
    if d.validation_per_class < 1:
        raise ConfigError("data.validation_per_class: must be >= 1")
    if not 0.0 < d.holdout_cap < 1.0:
        raise ConfigError("data.holdout_cap: must lie in (0, 1)")
    if cfg.smote.k < 1:
        raise ConfigError("smote.k: must be >= 1")
    for c, m in cfg.smote.multipliers.items():
        if not m >= 1.0:
            raise ConfigError(f"smote.multipliers[{c}]: must be >= 1")
    cfg.adversary.validate()
    f = cfg.fedmade
    if f.eps is not None and not f.eps > 0:
        raise ConfigError("fedmade.eps: must be > 0")
    if f.min_pts < 1:
        raise ConfigError("fedmade.min_pts: must be >= 1")
    if f.iters < 1:
        raise ConfigError("fedmade.iters: must be >= 1")
    if f.aux_per_class < 1:
        raise ConfigError("fedmade.aux_per_class: must be >= 1")
    return cfg


# ----------------------------------------------------------------------
# dict <-> dataclass


def _unwrap_optional(tp):
    if typing.get_origin(tp) is typing.Union:
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if len(args) == 1:
            return args[0], True
    return tp, False


def _coerce(tp, value, path):
    tp, optional = _unwrap_optional(tp)
    if value is None:
        if optional:
            return None
        raise ConfigError(f"{path}: may not be null")
    if dataclasses.is_dataclass(tp):
        if not isinstance(value, dict):
            raise ConfigError(f"{path}: expected a mapping")
        return _build(tp, value, path)
    origin = typing.get_origin(tp)
    try:
        if tp is bool:
            if not isinstance(value, bool):
                raise ConfigError(f"{path}: expected true/false")
            return value
        if tp is int:
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise ConfigError(f"{path}: expected an integer")
            return int(value)
        if tp is float:
            if isinstance(value, bool):
                raise ConfigError(f"{path}: expected a number")
            return float(value)
        if tp is str:
            return str(value)
        if origin in (list, List):
            (inner,) = typing.get_args(tp)
            return [_coerce(inner, v, f"{path}[{i}]") for i, v in enumerate(value)]
        if origin in (dict, Dict):
            kt, vt = typing.get_args(tp)
            return {_coerce(kt, k, f"{path}.key"): _coerce(vt, v, f"{path}[{k}]") for k, v in value.items()}
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return value


def _build(cls, d, path=""):
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(d) - names)
    if unknown:
        where = path or "config"
        raise ConfigError(f"{where}: unknown key(s) {unknown}")
    kwargs = {k: _coerce(hints[k], v, f"{path}.{k}" if path else k) for k, v in d.items()}
    return cls(**kwargs)


def from_dict(d) -> ExperimentConfig:
    if not isinstance(d, dict):
        raise ConfigError("config must be a mapping")
    if "algorithm" not in d:
        raise ConfigError("algorithm: required key missing")
    return validate(_build(ExperimentConfig, d))


def to_dict(cfg: ExperimentConfig) -> dict:
    return asdict(cfg)


def serialize(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(to_dict(cfg), sort_keys=False)


def loads(text: str) -> ExperimentConfig:
    try:
        d = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from None
    return from_dict(d)


def parse_config(path) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"{p}: cannot read config ({exc.strerror})") from None
    return loads(text)
