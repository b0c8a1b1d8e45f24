"""Experiment configuration: nested dataclasses with a strict loader.

Config files are JSON whose keys mirror the dataclass fields exactly;
unknown or misspelled keys are rejected with the offending path. CLI flags
override file values via dotted paths (``--set guidance.rho=2.0``).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, is_dataclass

from .costs import GuidanceConfig
from .errors import ConfigError
from .sampling import SamplerConfig


@dataclass(frozen=True)
class ScheduleConfig:
    steps: int = 100
    kind: str = "linear"
    beta_start: float = 1e-4
    beta_end: float = 0.1


@dataclass(frozen=True)
class DenoiserConfig:
    encoder_hidden: int = 32
    feature_dim: int = 64
    film_hidden: int = 64
    time_embed_dim: int = 64
    trunk_widths: tuple[int, ...] = (256, 256, 256)
    prediction_type: str = "epsilon"
    encoder_mode: str = "mlp-residual"


@dataclass(frozen=True)
class TrainingConfig:
    steps: int = 10000
    batch_size: int = 64
    lr: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    log_every: int = 1000


@dataclass(frozen=True)
class SandboxConfig:
    task: str = "reach"
    n_points: int = 64
    obs_horizon: int = 2
    horizon: int = 16
    exec_horizon: int = 8
    demo_episodes: int = 200
    expert_steps: int = 48
    expert_jitter: float = 0.01
    success_eps_frac: float = 0.05
    max_plans: int = 20


@dataclass(frozen=True)
class ExperimentConfig:
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    denoiser: DenoiserConfig = field(default_factory=DenoiserConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    guidance: GuidanceConfig = field(default_factory=GuidanceConfig)
    sandbox: SandboxConfig = field(default_factory=SandboxConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    seed: int = 0

    def validate(self) -> None:
        try:
            self.guidance.validate()
            self.sampler.validate(self.schedule.steps)
        except ValueError as err:
            raise ConfigError(str(err)) from err
        if self.sandbox.exec_horizon > self.sandbox.horizon:
            raise ConfigError("sandbox.exec_horizon exceeds sandbox.horizon")


_SECTIONS = (ScheduleConfig, DenoiserConfig, SamplerConfig, GuidanceConfig,
             SandboxConfig, TrainingConfig)
_PRIMS = {"int": int, "float": float, "str": str, "bool": bool}
_TUPLE_FIELDS = {"trunk_widths": int, "coord_mask": int}


def _field_type(f):
    """Resolve a dataclass field's annotation (stringified by postponed
    evaluation) to a section class, a primitive, or None for loose fields."""
    ann = f.type
    if not isinstance(ann, str):
        return ann
    if ann in _PRIMS:
        return _PRIMS[ann]
    for sub in _SECTIONS:
        if ann == sub.__name__:
            return sub
    return None


def _coerce(name: str, value, target_type, path: str):
    if name in _TUPLE_FIELDS:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"config key {path} expects a list")
        return tuple(_TUPLE_FIELDS[name](v) for v in value)
    if target_type is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"config key {path} expects a number, got {value!r}")
        return float(value)
    if target_type is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"config key {path} expects an integer, got {value!r}")
        return value
    if target_type is str and not isinstance(value, str):
        raise ConfigError(f"config key {path} expects a string, got {value!r}")
    return value


def _load_strict(cls, data, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"config section {path or 'root'} must be an object")
    known = {f.name: f for f in fields(cls)}
    for key in data:
        if key not in known:
            raise ConfigError(f"unknown config key {(path + key)!r}")
    kwargs = {}
    for name, f in known.items():
        if name not in data:
            continue
        ftype = _field_type(f)
        if ftype is not None and is_dataclass(ftype):
            kwargs[name] = _load_strict(ftype, data[name], f"{path}{name}.")
        else:
            kwargs[name] = _coerce(name, data[name], ftype, path + name)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"invalid config at {path or 'root'}: {err}") from err


def load_config(data: dict) -> ExperimentConfig:
    """Strictly parse a config dict; raises ConfigError on unknown keys."""
    cfg = _load_strict(ExperimentConfig, data, "")
    cfg.validate()
    return cfg


def load_config_file(path: str) -> ExperimentConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as err:
        raise ConfigError(f"cannot read config file {path}: {err}") from err
    return load_config(data)


def config_to_dict(cfg) -> dict:
    out = {}
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if is_dataclass(v):
            out[f.name] = config_to_dict(v)
        elif isinstance(v, tuple):
            out[f.name] = list(v)
        else:
            out[f.name] = v
    return out


def apply_overrides(cfg: ExperimentConfig, overrides: list[str]) -> ExperimentConfig:
    """Apply ``section.key=value`` strings on top of a config."""
    data = config_to_dict(cfg)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        dotted, raw = item.split("=", 1)
        parts = dotted.strip().split(".")
        node = data
        for p in parts[:-1]:
            if p not in node or not isinstance(node[p], dict):
                raise ConfigError(f"unknown config key {dotted!r}")
            node = node[p]
        if parts[-1] not in node:
            raise ConfigError(f"unknown config key {dotted!r}")
        node[parts[-1]] = _parse_literal(raw)
    return load_config(data)


def _parse_literal(raw: str):
    raw = raw.strip()
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw
