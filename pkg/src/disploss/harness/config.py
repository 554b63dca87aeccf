"""Run configuration: JSON <-> nested frozen dataclasses with field-level errors."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

from ..data import DATASETS
from ..diffusion import NoisePolicy
from ..losses import LossConfig
from ..model import DenoiserConfig
from ..optim import AdamConfig
from ..sampler import SamplerConfig


class ConfigError(ValueError):
    pass


# JSON name -> dataclass attribute, where they differ
_RENAMES = {"loss": {"lambda": "lam"}}

_SECTIONS = {
    "model": DenoiserConfig,
    "loss": LossConfig,
    "policy": NoisePolicy,
    "optimizer": AdamConfig,
    "sampler": SamplerConfig,
}


@dataclass(frozen=True)
class RunConfig:
    dataset: str = "checkerboard"
    model: DenoiserConfig = field(default_factory=DenoiserConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    policy: NoisePolicy = field(default_factory=NoisePolicy)
    optimizer: AdamConfig = field(default_factory=AdamConfig)
    batch_size: int = 256
    steps: int = 20000
    seed: int = 0
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    eval_every: int = 500
    checkpoint_every: int = 0
    # samples drawn for the end-of-run MMD^2 against a fresh dataset draw; 0 skips it
    mmd_samples: int = 1000
    name: str = "run"

    def __post_init__(self):
        if self.dataset not in DATASETS:
            raise ConfigError(f"dataset: expected one of {DATASETS}, got {self.dataset!r}")
        if self.batch_size < 2:
            raise ConfigError(f"batch_size: must be >= 2, got {self.batch_size}")
        if self.steps < 1:
            raise ConfigError(f"steps: must be >= 1, got {self.steps}")
        if self.eval_every < 1:
            raise ConfigError(f"eval_every: must be >= 1, got {self.eval_every}")
        if self.mmd_samples < 0 or self.mmd_samples == 1:
            raise ConfigError(f"mmd_samples: must be 0 or >= 2, got {self.mmd_samples}")
        if self.checkpoint_every < 0:
            raise ConfigError(f"checkpoint_every: must be >= 0, got {self.checkpoint_every}")

    def to_dict(self) -> dict:
        out: dict[str, Any] = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "model":
                value = value.to_dict()
            elif f.name in _SECTIONS:
                value = asdict(value)
                for json_key, attr in _RENAMES.get(f.name, {}).items():
                    value[json_key] = value.pop(attr)
            out[f.name] = value
        return out

    def with_overrides(self, overrides: dict[str, Any]) -> "RunConfig":
        """Apply dotted-path overrides such as ``{"loss.lambda": 0.25}``."""
        data = self.to_dict()
        for path, value in overrides.items():
            node = data
            *parents, leaf = path.split(".")
            for key in parents:
                if not isinstance(node.get(key), dict):
                    raise ConfigError(f"{path}: no such config section")
                node = node[key]
            if leaf not in node:
                raise ConfigError(f"{path}: no such config field")
            node[leaf] = value
        return RunConfig.from_dict(data)

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        return _from_dict(raw)


def _section(name: str, cls, raw) -> Any:
    if not isinstance(raw, dict):
        raise ConfigError(f"{name}: expected an object, got {type(raw).__name__}")
    kwargs = dict(raw)
    for json_key, attr in _RENAMES.get(name, {}).items():
        if json_key in kwargs:
            kwargs[attr] = kwargs.pop(json_key)
    allowed = {f.name for f in fields(cls)}
    unknown = sorted(set(kwargs) - allowed)
    if unknown:
        raise ConfigError(f"{name}.{unknown[0]}: unknown field")
    if name == "model" and kwargs.get("tap_blocks") is not None:
        kwargs["tap_blocks"] = tuple(kwargs["tap_blocks"])
    try:
        return cls(**kwargs)
    except (ValueError, TypeError) as err:
        raise ConfigError(f"{name}.{err}") from err


def _from_dict(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config: expected a JSON object")
    if "config" in raw and isinstance(raw["config"], dict):
        raw = raw["config"]  # a run manifest
    allowed = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(raw) - allowed)
    if unknown:
        raise ConfigError(f"{unknown[0]}: unknown field")
    kwargs = {}
    for key, value in raw.items():
        if key in _SECTIONS:
            kwargs[key] = _section(key, _SECTIONS[key], value)
        else:
            kwargs[key] = value
    try:
        return RunConfig(**kwargs)
    except TypeError as err:
        raise ConfigError(str(err)) from err


def load_config(path) -> RunConfig:
    """Read a run config, or the ``config`` block of a run manifest."""
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError as err:
        raise ConfigError(f"config file not found: {path}") from err
    except ValueError as err:
        raise ConfigError(f"{path}: not valid JSON ({err})") from err
    return RunConfig.from_dict(raw)


def dump_config(cfg: RunConfig, path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")


__all__ = ["ConfigError", "RunConfig", "dump_config", "load_config"]
