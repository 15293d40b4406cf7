"""Run configuration: defaults, YAML loading, validation, model building.

The config file is a YAML mapping with one section per concern; every key has
a default, unknown keys are rejected by name, and the fully-resolved config is
echoed into each run directory so results stay reproducible.
"""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass, field, fields, replace

import yaml

from .backbone import BackboneConfig, FPM_DIRECTIONS
from .diff_head import build_diff_model
from .errors import ConfigError, MissingArtifact
from .preprocess import PreprocessConfig
from .synthetic import SynthConfig
from .temporal_head import build_multiframe_model
from .training import HyperParams

DIFF_SEED_OFFSET = 1000  # keeps the two branches on disjoint init streams


@dataclass(frozen=True)
class FusionSettings:
    channels: int = 48
    multi_direction: str = "coarse_to_fine"
    diff_direction: str = "fine_to_coarse"

    def __post_init__(self):
        if self.channels < 1:
            raise ConfigError(f"fusion channels must be >= 1, got {self.channels}")
        for name, d in (("multi_direction", self.multi_direction), ("diff_direction", self.diff_direction)):
            if d not in FPM_DIRECTIONS:
                raise ConfigError(f"fusion.{name} must be one of {FPM_DIRECTIONS}, got {d!r}")


@dataclass(frozen=True)
class HeadSettings:
    lstm_hidden: int = 32
    dropout: float = 0.2

    def __post_init__(self):
        if self.lstm_hidden < 1:
            raise ConfigError(f"lstm_hidden must be >= 1, got {self.lstm_hidden}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")


@dataclass(frozen=True)
class PathSettings:
    dataset_dir: str = "data/synth"
    run_dir: str = "runs/run"


@dataclass(frozen=True)
class RunConfig:
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    fusion: FusionSettings = field(default_factory=FusionSettings)
    ppm_enabled: bool = True
    head: HeadSettings = field(default_factory=HeadSettings)
    train: HyperParams = field(default_factory=HyperParams)
    synth: SynthConfig = field(default_factory=SynthConfig)
    train_fraction: float = 0.8
    paths: PathSettings = field(default_factory=PathSettings)

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError(
                f"train_fraction must be in (0, 1), got {self.train_fraction}"
            )


_SECTIONS = {
    "preprocess": PreprocessConfig,
    "backbone": BackboneConfig,
    "fusion": FusionSettings,
    "ppm": None,  # handled specially: {enabled: bool}
    "head": HeadSettings,
    "train": HyperParams,
    "synth": SynthConfig,
    "split": None,  # {train_fraction: float}
    "paths": PathSettings,
}


def _build_section(cls, section_name: str, payload: dict):
    allowed = {f.name for f in fields(cls)}
    unknown = set(payload) - allowed
    if unknown:
        raise ConfigError(
            f"unknown key '{section_name}.{sorted(unknown)[0]}' in config"
        )
    coerced = dict(payload)
    for f in fields(cls):
        if f.name in coerced and isinstance(coerced[f.name], list):
            coerced[f.name] = tuple(coerced[f.name])
    try:
        return cls(**coerced)
    except TypeError as exc:
        raise ConfigError(f"bad '{section_name}' section: {exc}") from exc


def config_from_dict(data: dict) -> RunConfig:
    """Build a RunConfig from a (possibly partial) nested dict."""
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"config root must be a mapping, got {type(data).__name__}")
    unknown = set(data) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config section '{sorted(unknown)[0]}'")

    kwargs = {}
    for section, cls in _SECTIONS.items():
        if cls is None:
            continue
        payload = data.get(section, {})
        if payload is None:
            payload = {}
        if not isinstance(payload, dict):
            raise ConfigError(f"config section '{section}' must be a mapping")
        kwargs[section] = _build_section(cls, section, payload)

    ppm = data.get("ppm", {}) or {}
    if not isinstance(ppm, dict):
        raise ConfigError("config section 'ppm' must be a mapping")
    if set(ppm) - {"enabled"}:
        raise ConfigError(f"unknown key 'ppm.{sorted(set(ppm) - {'enabled'})[0]}' in config")
    kwargs["ppm_enabled"] = bool(ppm.get("enabled", True))

    split = data.get("split", {}) or {}
    if not isinstance(split, dict):
        raise ConfigError("config section 'split' must be a mapping")
    if set(split) - {"train_fraction"}:
        raise ConfigError(
            f"unknown key 'split.{sorted(set(split) - {'train_fraction'})[0]}' in config"
        )
    kwargs["train_fraction"] = float(split.get("train_fraction", 0.8))

    return RunConfig(**kwargs)


def load_config(path) -> RunConfig:
    """Parse a YAML config file into a validated RunConfig."""
    if not os.path.isfile(str(path)):
        raise MissingArtifact(f"config file not found: {path}")
    with open(str(path)) as fh:
        try:
            data = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"config file {path} is not valid YAML: {exc}") from exc
    return config_from_dict(data)


def config_to_dict(cfg: RunConfig) -> dict:
    """Nested plain-dict echo of a RunConfig (YAML/JSON serialisable)."""
    return {
        "preprocess": asdict(cfg.preprocess),
        "backbone": asdict(cfg.backbone),
        "fusion": asdict(cfg.fusion),
        "ppm": {"enabled": cfg.ppm_enabled},
        "head": asdict(cfg.head),
        "train": asdict(cfg.train),
        "synth": asdict(cfg.synth),
        "split": {"train_fraction": cfg.train_fraction},
        "paths": asdict(cfg.paths),
    }


def apply_overrides(cfg: RunConfig, **overrides) -> RunConfig:
    """Apply flat CLI-style overrides (None values are ignored)."""
    out = cfg
    if overrides.get("seed") is not None:
        out = replace(
            out,
            train=replace(out.train, seed=int(overrides["seed"])),
            synth=replace(out.synth, seed=int(overrides["seed"])),
        )
    if overrides.get("epochs") is not None:
        out = replace(out, train=replace(out.train, epochs=int(overrides["epochs"])))
    if overrides.get("k") is not None:
        out = replace(out, preprocess=replace(out.preprocess, k=int(overrides["k"])))
    if overrides.get("out_size") is not None:
        out = replace(
            out, preprocess=replace(out.preprocess, out_size=int(overrides["out_size"]))
        )
    if overrides.get("fpm_direction_multi") is not None:
        out = replace(
            out, fusion=replace(out.fusion, multi_direction=overrides["fpm_direction_multi"])
        )
    if overrides.get("fpm_direction_diff") is not None:
        out = replace(
            out, fusion=replace(out.fusion, diff_direction=overrides["fpm_direction_diff"])
        )
    if overrides.get("ppm") is not None:
        out = replace(out, ppm_enabled=bool(overrides["ppm"]))
    if overrides.get("dataset_dir") is not None:
        out = replace(out, paths=replace(out.paths, dataset_dir=str(overrides["dataset_dir"])))
    if overrides.get("run_dir") is not None:
        out = replace(out, paths=replace(out.paths, run_dir=str(overrides["run_dir"])))
    return out


def build_multi_model_from(cfg: RunConfig):
    backbone = replace(cfg.backbone, in_channels=3)
    return build_multiframe_model(
        backbone,
        seed=cfg.train.seed,
        fusion_channels=cfg.fusion.channels,
        fusion_direction=cfg.fusion.multi_direction,
        ppm_enabled=cfg.ppm_enabled,
        lstm_hidden=cfg.head.lstm_hidden,
        dropout=cfg.head.dropout,
    )


def build_diff_model_from(cfg: RunConfig):
    return build_diff_model(
        replace(cfg.backbone, in_channels=3),
        k=cfg.preprocess.k,
        seed=cfg.train.seed + DIFF_SEED_OFFSET,
        fusion_channels=cfg.fusion.channels,
        fusion_direction=cfg.fusion.diff_direction,
        ppm_enabled=cfg.ppm_enabled,
    )
