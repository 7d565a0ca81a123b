"""Flat keyed configuration files.

A config file is a flat YAML mapping. Training keys are the ``TrainConfig``
field names; augmentation keys are ``<transform>.<field>`` (for example
``hue.probability: 0.5``) plus ``order``. Unknown keys are rejected with a
closest-match suggestion.
"""

from __future__ import annotations

import difflib
import os

import yaml

from .fundusaug import TRANSFORMS, AugConfig
from .training import TrainConfig

AUG_FIELDS = ("enabled", "probability", "low", "high")
AUG_KEYS = tuple(f"{t}.{f}" for t in TRANSFORMS for f in AUG_FIELDS) + ("order",)
TRAIN_KEYS = tuple(k for k in TrainConfig.field_names() if k != "aug")


class ConfigError(ValueError):
    pass


def _suggest(key: str, known) -> str:
    close = difflib.get_close_matches(key, list(known), n=1)
    return f" (did you mean {close[0]!r}?)" if close else ""


def read_config_file(path) -> dict:
    if path is None:
        return {}
    path = os.fspath(path)
    with open(path, encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a flat key: value mapping")
    for key, value in data.items():
        if isinstance(value, dict):
            raise ConfigError(f"{path}: key {key!r} is nested; use flat dotted keys")
    return {str(k): v for k, v in data.items()}


def parse_overrides(pairs) -> dict:
    """``["key=value", ...]`` with YAML-typed values."""
    out = {}
    for pair in pairs or ():
        if "=" not in pair:
            raise ConfigError(f"override {pair!r} is not key=value")
        key, value = pair.split("=", 1)
        out[key.strip()] = yaml.safe_load(value)
    return out


def check_keys(mapping: dict, known) -> None:
    for key in mapping:
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}{_suggest(key, known)}")


def aug_config_from(mapping: dict) -> AugConfig:
    check_keys(mapping, AUG_KEYS)
    try:
        return AugConfig.from_mapping(mapping)
    except (KeyError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def train_config_from(mapping: dict, **defaults) -> TrainConfig:
    """Build a TrainConfig from flat keys; augmentation keys go to ``aug``."""
    check_keys(mapping, TRAIN_KEYS + AUG_KEYS)
    train_kw = dict(defaults)
    aug = {}
    for key, value in mapping.items():
        if key in AUG_KEYS:
            aug[key] = value
        else:
            train_kw[key] = value
    if aug:
        train_kw["aug"] = aug
    try:
        cfg = TrainConfig(**train_kw)
        cfg.aug_config()
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc
    return cfg


def dump_flat(mapping: dict) -> str:
    return yaml.safe_dump(mapping, sort_keys=True, default_flow_style=None)
