"""Config files: one YAML (or JSON) document with system / experiment / train sections.

Every dataclass field is a key; omitted keys keep their defaults. Example::

    system:
      n_devices: 10
      noise_power: 1.0e-10
      arrival_rate: 3.0e6
    experiment:
      scenario: lydroo
      slots: 20000
      events:
        - {slot: 6000, kind: weight_flip}
    train:
      learning_rate: 0.01
"""

from __future__ import annotations

from dataclasses import fields
from pathlib import Path

import yaml

from .actor import TrainConfig
from .harness import ExperimentConfig
from .model import ConfigError, SystemConfig

SECTIONS = {"system": SystemConfig, "experiment": ExperimentConfig, "train": TrainConfig}


def _coerce(cls, key, value):
    types = {f.name: f.type for f in fields(cls)}
    t = str(types[key])
    if value is None:
        return None
    try:
        if t.startswith("int") and not isinstance(value, list):
            return int(value)
        if t.startswith("float") and not isinstance(value, list):
            return float(value)
        if "ndarray" in t:
            return [float(v) for v in value] if isinstance(value, list) else float(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{cls.__name__}.{key}: cannot interpret {value!r}") from exc
    return value


def build_section(cls, raw: dict | None):
    raw = dict(raw or {})
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {', '.join(unknown)}")
    kwargs = {k: _coerce(cls, k, v) for k, v in raw.items()}
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{cls.__name__}: {exc}") from exc


def load_config(path=None, scenario: str | None = None):
    """Returns (SystemConfig, ExperimentConfig, TrainConfig)."""
    doc = {}
    if path is not None:
        try:
            doc = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config file must hold a mapping")
        extra = sorted(set(doc) - set(SECTIONS))
        if extra:
            raise ConfigError(f"unknown config sections: {', '.join(extra)}")
    exp = dict(doc.get("experiment") or {})
    if scenario is not None:
        if exp.get("scenario", scenario) != scenario:
            raise ConfigError(f"config is for scenario {exp['scenario']!r}, not {scenario!r}")
        exp["scenario"] = scenario
    return (build_section(SystemConfig, doc.get("system")),
            build_section(ExperimentConfig, exp),
            build_section(TrainConfig, doc.get("train")))
