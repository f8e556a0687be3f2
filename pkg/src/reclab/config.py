"""Run configuration: one file with data / model / training / augmentation /
baselines / output sections. Unknown keys are errors."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import yaml

from .augmentation import PerturbationPolicy
from .errors import ConfigError
from .pipeline import VARIANTS
from .synthetic import SyntheticConfig
from .training import TrainConfig


@dataclass
class DataSection:
    source: str = "synthetic"  # synthetic | file
    path: str | None = None
    delimiter: str = ","
    schema: dict = field(default_factory=dict)
    generator: dict = field(default_factory=dict)  # SyntheticConfig overrides
    seed: int = 13
    min_cities: int = 4
    max_cities: int = 10
    max_duration_days: int = 22
    filter_eval: bool = False
    train_fraction: float = 0.9
    valid_fraction: float = 0.1  # carved out of train for early stopping

    def synthetic_config(self) -> SyntheticConfig:
        names = {f.name for f in dataclasses.fields(SyntheticConfig)}
        unknown = set(self.generator) - names
        if unknown:
            raise ConfigError(f"unknown generator keys: {sorted(unknown)}")
        kw = dict(self.generator)
        if "length_weights" in kw:
            kw["length_weights"] = tuple(kw["length_weights"])
        return SyntheticConfig(**kw)


@dataclass
class ModelSection:
    variant: str = "narm_v2"
    hidden_size: int = 100
    embedding_dim: int = 50
    month_dim: int = 25
    duration_dim: int = 25
    category_dim: int = 50
    dropout: float = 0.25
    extended_features: bool = True
    autoencoder_epochs: int = 300


@dataclass
class AugmentationSection:
    p_drop: float = 0.1
    p_mask: float = 0.1
    p_substitute: float = 0.1
    p_none: float = 0.7
    substitute_top_k: int = 5
    min_trip_len: int = 4

    def policy(self, seed: int) -> PerturbationPolicy:
        return PerturbationPolicy(self.p_drop, self.p_mask, self.p_substitute, self.p_none,
                                  self.substitute_top_k, seed)


@dataclass
class BaselineSection:
    popularity_final_only: bool = False
    similarity_top_k: int = 5
    similarity_weighted: bool = False
    itemknn_exclude_visited: bool = False


@dataclass
class OutputSection:
    directory: str = "runs/default"
    metrics_file: str = "metrics.jsonl"
    timings_file: str = "timings.jsonl"
    checkpoint_file: str = "model.ckpt"
    report_file: str = "report.jsonl"
    summary_file: str = "summary.json"
    leaderboard_file: str = "leaderboard.txt"
    leaderboard_records: str = "leaderboard.jsonl"
    embedding_plot: str = "user_embeddings.png"


@dataclass
class RunConfig:
    data: DataSection = field(default_factory=DataSection)
    model: ModelSection = field(default_factory=ModelSection)
    training: TrainConfig = field(default_factory=TrainConfig)
    augmentation: AugmentationSection = field(default_factory=AugmentationSection)
    baselines: BaselineSection = field(default_factory=BaselineSection)
    output: OutputSection = field(default_factory=OutputSection)

    def validate(self) -> "RunConfig":
        if self.model.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {sorted(VARIANTS)}, got {self.model.variant!r}")
        if self.data.source not in ("synthetic", "file"):
            raise ConfigError(f"data.source must be synthetic or file, got {self.data.source!r}")
        if self.data.source == "file":
            if not self.data.path or not Path(self.data.path).exists():
                raise ConfigError(f"data file not found: {self.data.path!r}")
        try:
            self.data.synthetic_config().validate()
            self.augmentation.policy(0)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


_SECTIONS = {
    "data": DataSection,
    "model": ModelSection,
    "training": TrainConfig,
    "augmentation": AugmentationSection,
    "baselines": BaselineSection,
    "output": OutputSection,
}


def _section(cls, values: Mapping[str, Any], where: str):
    if values is None:
        values = {}
    if not isinstance(values, Mapping):
        raise ConfigError(f"section {where!r} must be a mapping")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(values) - names
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    try:
        return cls(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def config_from_dict(d: Mapping[str, Any]) -> RunConfig:
    if "config" in d and "command" in d:  # a run manifest
        d = d["config"]
    unknown = set(d) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    return RunConfig(**{k: _section(cls, d.get(k), k) for k, cls in _SECTIONS.items()}).validate()


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig().validate()
    text = Path(path).read_text()
    d = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
    return config_from_dict(d or {})


def with_overrides(cfg: RunConfig, seed: int | None = None, variant: str | None = None,
                   out: str | None = None) -> RunConfig:
    d = cfg.to_dict()
    if seed is not None:
        d["training"]["seed"] = seed
    if variant is not None:
        d["model"]["variant"] = variant
    if out is not None:
        d["output"]["directory"] = out
    return config_from_dict(d)
