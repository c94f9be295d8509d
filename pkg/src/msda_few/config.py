"""Run configuration: one JSON document, every field defaulted, unknown keys rejected.

The top-level ``seed`` drives every random stream (data generation and
training); nested sections carry no seeds of their own.
"""

from __future__ import annotations

import dataclasses
import json
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .data import SynthConfig
from .exceptions import ConfigError, MSDAError
from .trainer import TrainConfig

# fields set from the top-level seed, kept out of the JSON surface
_SEED_OWNED = {SynthConfig: {"seed"}, TrainConfig: {"seed"}}


@dataclass
class CsvPaths:
    alpha: str = "alpha.csv"
    beta: str = "beta.csv"
    target: str = "target.csv"
    n_classes: int | None = None


@dataclass
class DataConfig:
    source: str = "synthetic"
    synthetic: SynthConfig = field(default_factory=SynthConfig)
    csv: CsvPaths = field(default_factory=CsvPaths)

    def __post_init__(self):
        if self.source not in ("synthetic", "csv"):
            raise ConfigError(f"data.source must be 'synthetic' or 'csv', got {self.source!r}")


@dataclass
class GradcheckConfig:
    input_dim: int = 3
    feature_dim: int = 8
    n_classes: int = 4
    n_alpha_classes: int = 2
    hidden: list[int] = field(default_factory=lambda: [8])
    disc_hidden: int = 8
    batch_size: int = 4
    seeds: int = 5
    epsilon: float = 1e-5
    tolerance: float = 1e-4
    dropout: float = 0.0
    iteration: int = 2500


@dataclass
class VerifyConfig:
    grid_resolution: int = 10_000
    trials: int = 1000
    max_support: int = 32


@dataclass
class RunConfig:
    seed: int = 0
    out_dir: str = "runs/default"
    data: DataConfig = field(default_factory=DataConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    gradcheck: GradcheckConfig = field(default_factory=GradcheckConfig)
    verify: VerifyConfig = field(default_factory=VerifyConfig)

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        self.apply_seed(self.seed)

    def apply_seed(self, seed: int) -> None:
        self.seed = int(seed)
        self.data.synthetic.seed = self.seed
        self.train.seed = self.seed


def _config_fields(cls) -> list[dataclasses.Field]:
    skip = _SEED_OWNED.get(cls, set())
    return [f for f in dataclasses.fields(cls)
            if f.metadata.get("config", True) and f.name not in skip]


def _coerce(tp, value, path: str):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin in (typing.Union, types.UnionType):
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _coerce(inner[0], value, path)
    if dataclasses.is_dataclass(tp):
        return from_dict(tp, value, path)
    if origin is list:
        if not isinstance(value, list):
            raise ConfigError(f"{path}: expected a list, got {type(value).__name__}")
        return [_coerce(args[0], v, f"{path}[{i}]") for i, v in enumerate(value)]
    if origin is dict:
        if not isinstance(value, dict):
            raise ConfigError(f"{path}: expected an object, got {type(value).__name__}")
        return {str(k): _coerce(args[1], v, f"{path}.{k}") for k, v in value.items()}
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    raise ConfigError(f"{path}: unsupported field type {tp!r}")


def from_dict(cls, data: Any, path: str = ""):
    """Build dataclass ``cls`` from plain JSON data, failing on the first bad key."""
    if not isinstance(data, dict):
        raise ConfigError(f"{path or '<root>'}: expected an object, got {type(data).__name__}")
    allowed = {f.name: f for f in _config_fields(cls)}
    hints = typing.get_type_hints(cls)
    for key in data:
        if key not in allowed:
            where = f"{path}.{key}" if path else key
            raise ConfigError(f"{where}: unknown key (allowed: {', '.join(sorted(allowed))})")
    kwargs = {k: _coerce(hints[k], v, f"{path}.{k}" if path else k) for k, v in data.items()}
    try:
        return cls(**kwargs)
    except ConfigError as exc:
        raise ConfigError(f"{path or '<root>'}: {exc}") from None
    except (MSDAError, ValueError, TypeError) as exc:
        raise ConfigError(f"{path or '<root>'}: {exc}") from None


def to_dict(obj) -> dict:
    out = {}
    for f in _config_fields(type(obj)):
        v = getattr(obj, f.name)
        if dataclasses.is_dataclass(v):
            v = to_dict(v)
        elif isinstance(v, list):
            v = [to_dict(x) if dataclasses.is_dataclass(x) else x for x in v]
        elif isinstance(v, dict):
            v = dict(v)
        out[f.name] = v
    return out


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return from_dict(RunConfig, raw)
