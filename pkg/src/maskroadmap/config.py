"""Run configuration for the real-data pipeline, read from YAML."""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

import yaml

from maskroadmap.dataset import ENDPOINTS, HORIZONS, PRIMARY_TARGET, SAH_FALLBACK_TARGET, TargetSpec
from maskroadmap.estimators import SLConfig, default_g_config, default_q_config
from maskroadmap.learners import ScreenSpec

MODES = ("primary_sep1", "secondary_sah", "custom")
ESTIMATOR_NAMES = ("tmle", "gcomp", "unadjusted")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    data_dir: Path
    output_dir: Path
    seed: int
    mode: str = "primary_sep1"
    target_date: dt.date = PRIMARY_TARGET
    custom_targets: dict[str, dt.date] | None = None
    sah_fallback: dt.date | str = SAH_FALLBACK_TARGET
    window_end: dt.date = dt.date(2020, 12, 31)
    date_key: str = "enacted"
    endpoints: tuple[str, ...] = ENDPOINTS
    horizons: tuple[int, ...] = HORIZONS
    estimators: tuple[str, ...] = ESTIMATOR_NAMES
    q_config: SLConfig = field(default_factory=default_q_config)
    g_config: SLConfig = field(default_factory=default_g_config)
    gbound: float = 0.01
    n_jobs: int = 1

    def __post_init__(self):
        self.data_dir = Path(self.data_dir)
        self.output_dir = Path(self.output_dir)
        if isinstance(self.seed, bool) or not isinstance(self.seed, int):
            raise ConfigError(f"seed must be an integer, got {self.seed!r}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mode == "custom" and not self.custom_targets:
            raise ConfigError("custom mode needs custom_targets")
        if not self.endpoints or set(self.endpoints) - set(ENDPOINTS):
            raise ConfigError(f"endpoints must be a non-empty subset of {ENDPOINTS}")
        if not self.horizons or any(not isinstance(h, int) or h <= 0 for h in self.horizons):
            raise ConfigError("horizons must be a non-empty list of positive integers")
        if not self.estimators or set(self.estimators) - set(ESTIMATOR_NAMES):
            raise ConfigError(f"estimators must be a non-empty subset of {ESTIMATOR_NAMES}")
        if not 0.0 <= self.gbound < 0.5:
            raise ConfigError("gbound must lie in [0, 0.5)")
        if self.date_key not in ("enacted", "issued"):
            raise ConfigError("date_key must be 'enacted' or 'issued'")
        if self.n_jobs < 1:
            raise ConfigError("n_jobs must be >= 1")

    @property
    def targets(self) -> TargetSpec:
        return TargetSpec(self.mode, self.target_date, self.custom_targets, self.sah_fallback, self.window_end)

    @property
    def cells(self) -> list[tuple[str, int]]:
        return [(e, h) for e in self.endpoints for h in self.horizons]

    def to_dict(self) -> dict[str, Any]:
        """Plain-data form; round-trips through :func:`config_from_dict`."""

        def iso(d):
            return d.isoformat() if isinstance(d, dt.date) else d

        return {
            "data_dir": str(self.data_dir),
            "output_dir": str(self.output_dir),
            "seed": self.seed,
            "mode": self.mode,
            "target_date": iso(self.target_date),
            "custom_targets": None if self.custom_targets is None else {k: iso(v) for k, v in sorted(self.custom_targets.items())},
            "sah_fallback": iso(self.sah_fallback),
            "window_end": iso(self.window_end),
            "date_key": self.date_key,
            "endpoints": list(self.endpoints),
            "horizons": list(self.horizons),
            "estimators": list(self.estimators),
            "q_config": self.q_config.to_dict(),
            "g_config": self.g_config.to_dict(),
            "gbound": self.gbound,
            "n_jobs": self.n_jobs,
        }


def _as_date(value, key: str):
    if value == "median":
        return value
    if isinstance(value, dt.date):
        return value
    try:
        return dt.date.fromisoformat(str(value))
    except ValueError as exc:
        raise ConfigError(f"{key}: not an ISO date: {value!r}") from exc


def _sl_config(raw: Mapping[str, Any] | None, task: str, screen: ScreenSpec | None) -> SLConfig:
    default = default_q_config(screen) if task == "regression" else default_g_config(screen)
    if raw is None:
        return default
    raw = dict(raw)
    if "library" not in raw:
        raw["library"] = [s.to_dict() for s in default.library]
    for key in ("loss", "stratify_folds"):
        raw.setdefault(key, getattr(default, key))
    try:
        return SLConfig.from_dict(raw, task)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {task} Super Learner config: {exc}") from exc


def config_from_dict(raw: Mapping[str, Any], base_dir: Path | None = None) -> RunConfig:
    """Build a :class:`RunConfig`; relative paths resolve against `base_dir`."""
    raw = dict(raw)
    if "seed" not in raw:
        raise ConfigError("seed is required")
    known = set(RunConfig.__dataclass_fields__) | {"screen"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    for key in ("data_dir", "output_dir"):
        if key not in raw:
            raise ConfigError(f"{key} is required")
        p = Path(raw[key])
        raw[key] = p if p.is_absolute() or base_dir is None else base_dir / p
    screen_raw = raw.pop("screen", {})
    try:
        screen = None if screen_raw is False else ScreenSpec(**(screen_raw or {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid screen settings: {exc}") from exc
    raw["q_config"] = _sl_config(raw.get("q_config"), "regression", screen)
    raw["g_config"] = _sl_config(raw.get("g_config"), "binary", screen)
    for key in ("target_date", "sah_fallback", "window_end"):
        if key in raw:
            raw[key] = _as_date(raw[key], key)
    if raw.get("custom_targets") is not None:
        raw["custom_targets"] = {k: _as_date(v, f"custom_targets.{k}") for k, v in raw["custom_targets"].items()}
    for key in ("endpoints", "horizons", "estimators"):
        if key in raw:
            raw[key] = tuple(raw[key])
    try:
        return RunConfig(**raw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: Path | str, **overrides) -> RunConfig:
    """Read a YAML run config; non-None `overrides` replace file values."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    raw.update({k: v for k, v in overrides.items() if v is not None})
    return config_from_dict(raw, base_dir=path.parent)


def with_overrides(config: RunConfig, **overrides) -> RunConfig:
    return replace(config, **{k: v for k, v in overrides.items() if v is not None})
