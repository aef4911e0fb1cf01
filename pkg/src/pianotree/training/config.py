"""Training configuration and the YAML config file that carries it."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from pathlib import Path

import yaml

from ..model.dims import ModelDims


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 128
    lr_start: float = 1e-3
    lr_end: float = 1e-5
    # per-step factor; None derives it so lr reaches lr_end at the end of the run
    lr_decay: float | None = None
    tf_start: float = 0.8
    tf_end: float = 0.0
    beta_max: float = 0.1
    beta_warmup_steps: int = 1000
    max_epochs: int = 6
    # stop after this many optimizer steps even if epochs remain
    max_steps: int | None = None
    seed: int = 0
    split_ratio: float = 0.9
    grad_clip: float = 5.0
    augment: bool = True
    checkpoint_every: int = 1

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError("batch_size must be positive")
        if not 0 < self.lr_end <= self.lr_start:
            raise ConfigError("need 0 < lr_end <= lr_start")
        if self.lr_decay is not None and not 0 < self.lr_decay <= 1:
            raise ConfigError("lr_decay must lie in (0, 1]")
        if not 0 <= self.tf_end <= self.tf_start <= 1:
            raise ConfigError("need 0 <= tf_end <= tf_start <= 1")
        if self.beta_max < 0 or self.beta_warmup_steps < 0:
            raise ConfigError("beta_max and beta_warmup_steps must be non-negative")
        if self.max_epochs < 1:
            raise ConfigError("max_epochs must be positive")
        if self.max_steps is not None and self.max_steps < 1:
            raise ConfigError("max_steps must be positive")
        if not 0 < self.split_ratio < 1:
            raise ConfigError("split_ratio must lie in (0, 1)")
        if self.checkpoint_every < 1:
            raise ConfigError("checkpoint_every must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


def _section(raw: dict, name: str, cls):
    if name not in raw or not isinstance(raw[name], dict):
        raise ConfigError(f"missing config key: {name}")
    body = raw[name]
    names = [f.name for f in fields(cls)]
    for key in names:
        if key not in body:
            raise ConfigError(f"missing config key: {name}.{key}")
    unknown = sorted(set(body) - set(names))
    if unknown:
        raise ConfigError(f"unknown config key: {name}.{unknown[0]}")
    try:
        return cls(**body)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {name} section: {exc}") from exc


def parse_config(raw: dict) -> tuple[ModelDims, TrainConfig]:
    """Every field of both sections must be present."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping with 'model' and 'train' sections")
    return _section(raw, "model", ModelDims), _section(raw, "train", TrainConfig)


def load_config(path: str | Path) -> tuple[ModelDims, TrainConfig]:
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    return parse_config(raw)


def dump_config(dims: ModelDims, config: TrainConfig) -> str:
    return yaml.safe_dump({"model": dims.to_dict(), "train": config.to_dict()}, sort_keys=False)
