"""Run configuration: one JSON document, every field optional.

Unknown keys are rejected so that typos surface as errors instead of
silently falling back to defaults. Errors carry the dotted key path.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

from .battery import BatteryParams
from .game import MODES as SOLVER_MODES
from .neighbourhood import Category, ForecastErrorSpec
from .tariff import TariffParams

RUN_MODES = ("single", "sweep-participation", "sweep-error", "sweep-consumer-mix", "oracle-check")
MIXES = ("LOW", "BASE", "HIGH", "MIXED")
U64_MAX = 2**64 - 1


class ConfigError(ValueError):
    """Invalid configuration; ``path`` is the dotted key that caused it."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


@dataclass
class DataConfig:
    source: str = "synthetic"
    mix: dict = field(default_factory=lambda: {"LOW": 7, "BASE": 9, "HIGH": 9})
    start_hour: float = 0.0
    pv_peak: float = 3.7
    demand: Optional[str] = None
    pv: Optional[str] = None
    categories: Optional[list] = None
    pv_scales: Optional[list] = None


@dataclass
class SolverConfig:
    tol: float = 1e-9
    max_iter: int = 1000
    init: str = "zeros"
    mode: str = "idealized"
    others: str = "mean"


@dataclass
class SweepConfig:
    participation_step: int = 3
    error_step: float = 0.1
    mixes: list = field(default_factory=lambda: list(MIXES))


@dataclass
class OracleConfig:
    instances: int = 100
    resolution: float = 0.01
    horizons: list = field(default_factory=lambda: [2, 3, 4])


@dataclass
class RunConfig:
    mode: str = "single"
    seed: int = 1
    T: int = 24
    dt: float = 1.0
    days: int = 1
    initial_soc: float = 0.0
    chain: bool = True
    participants: Optional[list] = None
    data: DataConfig = field(default_factory=DataConfig)
    battery: BatteryParams = field(default_factory=BatteryParams)
    tariff: TariffParams = field(default_factory=TariffParams)
    errors: ForecastErrorSpec = field(default_factory=ForecastErrorSpec)
    solver: SolverConfig = field(default_factory=SolverConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    oracle: OracleConfig = field(default_factory=OracleConfig)

    @property
    def n_households(self) -> int:
        if self.data.source == "csv" and self.data.categories:
            return len(self.data.categories)
        return sum(int(v) for v in self.data.mix.values())

    def to_dict(self) -> dict:
        return asdict(self)


_SECTIONS = {
    "data": DataConfig, "battery": BatteryParams, "tariff": TariffParams,
    "errors": ForecastErrorSpec, "solver": SolverConfig, "sweep": SweepConfig,
    "oracle": OracleConfig,
}


def _is_number(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _check_type(path, value, default):
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float):
        ok = _is_number(value)
        value = float(value) if ok else value
    elif isinstance(default, str):
        ok = isinstance(value, str)
    elif isinstance(default, (list, dict)):
        ok = isinstance(value, type(default))
    else:  # Optional fields default to None
        ok = True
    if not ok:
        raise ConfigError(path, f"expected {type(default).__name__}, got {type(value).__name__}")
    return value


def _build(cls, raw, path):
    if not isinstance(raw, dict):
        raise ConfigError(path, "expected an object")
    defaults = cls()
    known = {f.name for f in fields(cls)}
    kwargs = {}
    for key, value in raw.items():
        sub = f"{path}.{key}" if path else key
        if key not in known:
            raise ConfigError(sub, "unknown key")
        if path == "" and key in _SECTIONS:
            kwargs[key] = _build(_SECTIONS[key], value, sub)
        else:
            kwargs[key] = _check_type(sub, value, getattr(defaults, key))
    try:
        return cls(**kwargs)
    except ValueError as exc:  # dataclass invariants (battery, tariff, errors)
        raise ConfigError(path, str(exc)) from None


def _validate(cfg: RunConfig):
    if cfg.mode not in RUN_MODES:
        raise ConfigError("mode", f"must be one of {RUN_MODES}")
    if not 0 <= cfg.seed <= U64_MAX:
        raise ConfigError("seed", "must be an unsigned 64-bit integer")
    if cfg.T < 2:
        raise ConfigError("T", "need at least 2 intervals")
    if cfg.dt <= 0:
        raise ConfigError("dt", "must be positive")
    if cfg.days < 1:
        raise ConfigError("days", "must be at least 1")
    if cfg.initial_soc < cfg.battery.s_min or cfg.initial_soc > cfg.battery.s_max:
        raise ConfigError("initial_soc", "outside the battery's SOC range")
    d = cfg.data
    if d.source not in ("synthetic", "csv"):
        raise ConfigError("data.source", "must be 'synthetic' or 'csv'")
    if d.source == "csv":
        for key in ("demand", "pv"):
            if not getattr(d, key):
                raise ConfigError(f"data.{key}", "required when data.source is 'csv'")
        if d.categories is not None:
            for i, c in enumerate(d.categories):
                if c not in Category.__members__:
                    raise ConfigError(f"data.categories[{i}]", f"unknown category {c!r}")
    else:
        for key in ("demand", "pv"):
            if getattr(d, key) is not None:
                raise ConfigError(f"data.{key}", "only valid with data.source 'csv'")
        for key, count in d.mix.items():
            if key not in Category.__members__:
                raise ConfigError(f"data.mix.{key}", "unknown category")
            if not isinstance(count, int) or isinstance(count, bool) or count < 0:
                raise ConfigError(f"data.mix.{key}", "must be a non-negative integer")
        if cfg.n_households < 1:
            raise ConfigError("data.mix", "needs at least one household")
    if cfg.participants is not None:
        M = cfg.n_households if d.source == "synthetic" or d.categories else None
        for i, p in enumerate(cfg.participants):
            if not isinstance(p, int) or isinstance(p, bool) or p < 0 or (M is not None and p >= M):
                raise ConfigError(f"participants[{i}]", f"not a household index: {p!r}")
        if len(set(cfg.participants)) != len(cfg.participants):
            raise ConfigError("participants", "duplicate household index")
    s = cfg.solver
    if s.tol <= 0:
        raise ConfigError("solver.tol", "must be positive")
    if s.max_iter < 1:
        raise ConfigError("solver.max_iter", "must be at least 1")
    if s.init not in ("zeros", "random"):
        raise ConfigError("solver.init", "must be 'zeros' or 'random'")
    if s.mode not in SOLVER_MODES:
        raise ConfigError("solver.mode", f"must be one of {SOLVER_MODES}")
    if s.others not in ("mean", "sum"):
        raise ConfigError("solver.others", "must be 'mean' or 'sum'")
    if cfg.sweep.participation_step < 1:
        raise ConfigError("sweep.participation_step", "must be at least 1")
    if not 0 < cfg.sweep.error_step <= 1:
        raise ConfigError("sweep.error_step", "must lie in (0, 1]")
    for i, m in enumerate(cfg.sweep.mixes):
        if m not in MIXES:
            raise ConfigError(f"sweep.mixes[{i}]", f"must be one of {MIXES}")
    o = cfg.oracle
    if o.instances < 1:
        raise ConfigError("oracle.instances", "must be at least 1")
    if o.resolution <= 0:
        raise ConfigError("oracle.resolution", "must be positive")
    if not o.horizons or any(not isinstance(h, int) or h < 1 for h in o.horizons):
        raise ConfigError("oracle.horizons", "must list positive integers")
    return cfg


def config_from_dict(raw: dict, mode=None, seed=None) -> RunConfig:
    """Resolve a raw mapping into a validated :class:`RunConfig`.

    ``mode`` and ``seed`` override the document's values when given.
    """
    raw = dict(raw or {})
    if mode is not None:
        raw["mode"] = mode
    if seed is not None:
        raw["seed"] = seed
    return _validate(_build(RunConfig, raw, ""))


def load_config(path=None, mode=None, seed=None) -> RunConfig:
    """Read a JSON config file (``None`` means all defaults).

    Missing or unreadable files raise ``OSError``; malformed JSON raises
    :class:`ConfigError`.
    """
    raw = {}
    if path is not None:
        text = Path(path).read_text()
        try:
            raw = json.loads(text) if text.strip() else {}
        except json.JSONDecodeError as exc:
            raise ConfigError("", f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return config_from_dict(raw, mode=mode, seed=seed)
