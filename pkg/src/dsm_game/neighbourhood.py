"""Households, demand/PV traces and load accounting."""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .battery import BatteryParams

LOAD_TOL = 1e-9


class Category(str, enum.Enum):
    LOW = "LOW"
    BASE = "BASE"
    HIGH = "HIGH"


#: PV scaling factor p_n per consumer category.
PV_SCALE = {Category.LOW: 0.3, Category.BASE: 0.5, Category.HIGH: 0.7}

#: Relative consumption level of each category in synthetic traces.
_CATEGORY_LEVEL = {Category.LOW: 0.8, Category.BASE: 1.2, Category.HIGH: 1.8}


class NegativeLoadError(ValueError):
    pass


class TraceFormatError(ValueError):
    """A trace file could not be parsed; ``line`` is 1-based when known."""

    def __init__(self, message, path=None, line=None):
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)
        self.path = path
        self.line = line


class ShapeMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class Household:
    id: int
    participant: bool
    category: Category = Category.BASE
    pv_scale: float = 0.0
    battery: Optional[BatteryParams] = None

    def __post_init__(self):
        if self.participant != (self.battery is not None):
            raise ValueError(f"household {self.id}: participants (and only they) own a battery")
        if not self.participant and self.pv_scale != 0.0:
            raise ValueError(f"household {self.id}: non-participants have no PV")
        if self.pv_scale < 0:
            raise ValueError(f"household {self.id}: pv_scale must be >= 0")


def make_households(categories, participants=None, battery=None, pv_scales=None):
    """Build households from a category list.

    ``participants`` is an iterable of household indices (all by default).
    PV scale defaults to the category value for participants.
    """
    categories = [Category(c) for c in categories]
    battery = battery or BatteryParams()
    members = set(range(len(categories)) if participants is None else participants)
    out = []
    for m, cat in enumerate(categories):
        if m in members:
            scale = PV_SCALE[cat] if pv_scales is None else float(pv_scales[m])
            out.append(Household(m, True, cat, scale, battery))
        else:
            out.append(Household(m, False, cat))
    return out


@dataclass(frozen=True)
class DayTraces:
    """One day of demand and PV data, actual and forecast.

    ``actual_pv``/``forecast_pv`` hold the unscaled output ``w`` of the shared
    reference PV site; per-household generation is ``pv_scale[m] * w``.
    """

    actual_demand: np.ndarray
    actual_pv: np.ndarray
    forecast_demand: np.ndarray = None
    forecast_pv: np.ndarray = None
    pv_scale: np.ndarray = None

    def __post_init__(self):
        demand = np.atleast_2d(np.asarray(self.actual_demand, dtype=float))
        pv = np.asarray(self.actual_pv, dtype=float).reshape(-1)
        M, T = demand.shape
        if pv.shape != (T,):
            raise ShapeMismatchError(f"PV trace has {pv.size} intervals, demand has {T}")
        fd = demand if self.forecast_demand is None else np.atleast_2d(
            np.asarray(self.forecast_demand, dtype=float))
        fp = pv if self.forecast_pv is None else np.asarray(self.forecast_pv, dtype=float).reshape(-1)
        scale = np.zeros(M) if self.pv_scale is None else np.asarray(self.pv_scale, dtype=float).reshape(-1)
        if fd.shape != demand.shape or fp.shape != pv.shape or scale.shape != (M,):
            raise ShapeMismatchError("forecast / pv_scale shapes do not match the actual traces")
        for name, arr in (("demand", demand), ("pv", pv), ("forecast demand", fd), ("forecast pv", fp)):
            if np.any(arr < 0) or not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} entries must be finite and >= 0")
        object.__setattr__(self, "actual_demand", demand)
        object.__setattr__(self, "actual_pv", pv)
        object.__setattr__(self, "forecast_demand", fd)
        object.__setattr__(self, "forecast_pv", fp)
        object.__setattr__(self, "pv_scale", scale)

    @property
    def n_households(self) -> int:
        return self.actual_demand.shape[0]

    @property
    def n_intervals(self) -> int:
        return self.actual_demand.shape[1]

    def household_pv(self, forecast=False) -> np.ndarray:
        w = self.forecast_pv if forecast else self.actual_pv
        return self.pv_scale[:, None] * w[None, :]

    def with_pv_scale(self, pv_scale) -> "DayTraces":
        return replace(self, pv_scale=np.asarray(pv_scale, dtype=float))


@dataclass(frozen=True)
class ForecastErrorSpec:
    eps_d: float = 0.08
    eps_w: float = 0.10
    magnitude: float = 1.0

    def __post_init__(self):
        if not (0 <= self.eps_d < 1 and 0 <= self.eps_w < 1):
            raise ValueError("error fractions must lie in [0, 1)")
        if not 0 <= self.magnitude <= 1:
            raise ValueError("magnitude must lie in [0, 1]")


def net_demand(demand, pv, eta_inv):
    """Split demand against PV into grid net-demand and DC-side PV surplus.

    Returns ``(net, excess)`` with ``net = max(0, demand - eta_inv * pv)`` and
    ``excess = max(0, pv - demand / eta_inv)``.
    """
    demand = np.asarray(demand, dtype=float)
    pv = np.asarray(pv, dtype=float)
    net = np.maximum(demand - eta_inv * pv, 0.0)
    excess = np.maximum(pv - demand / eta_inv, 0.0)
    return net[()], excess[()]


def apply_worst_case_error(traces: DayTraces, spec: ForecastErrorSpec) -> DayTraces:
    """Forecasts that under-predict demand and over-predict PV, for everyone alike."""
    return replace(
        traces,
        forecast_demand=traces.actual_demand * (1.0 - spec.magnitude * spec.eps_d),
        forecast_pv=traces.actual_pv * (1.0 + spec.magnitude * spec.eps_w),
    )


def load(net, a):
    """Grid draw of a household: net-demand plus battery decision."""
    out = np.asarray(net, dtype=float) + np.asarray(a, dtype=float)
    if np.any(out < -LOAD_TOL):
        raise NegativeLoadError(f"negative load {out.min()!r}: decision discharges more than needed")
    return np.maximum(out, 0.0)[()]


def total_load(loads):
    """Aggregate grid load; ``loads`` is M-vector or M x T matrix."""
    return np.sum(np.asarray(loads, dtype=float), axis=0)[()]


def others_load_sum(loads, n):
    """Summed load of every household except ``n``."""
    loads = np.asarray(loads, dtype=float)
    return (total_load(loads) - loads[n])[()]


def others_load_mean(loads, n):
    """Average load of the other households (reporting only)."""
    loads = np.asarray(loads, dtype=float)
    if loads.shape[0] < 2:
        return np.zeros_like(loads[0])[()]
    return (others_load_sum(loads, n) / (loads.shape[0] - 1))[()]


# --------------------------------------------------------------------- CSV I/O


@dataclass
class TraceConfig:
    T: int = 24
    dt: float = 1.0
    categories: Sequence[str] = field(default_factory=list)
    pv_scales: Optional[Sequence[float]] = None


def _parse_float(text, path, line, allow_blank=False):
    text = text.strip()
    if text == "" and allow_blank:
        return 0.0
    try:
        value = float(text)
    except ValueError:
        if allow_blank:
            return 0.0
        raise TraceFormatError(f"cannot parse {text!r} as a number", path, line) from None
    if allow_blank and not math.isfinite(value):
        return 0.0
    return value


def read_demand_csv(path) -> np.ndarray:
    """Read a ``household_0..household_{M-1}`` CSV into an (intervals, M) array."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise TraceFormatError("empty file", path, 1) from None
        expected = [f"household_{m}" for m in range(len(header))]
        if [h.strip() for h in header] != expected:
            raise TraceFormatError(f"header must be {expected[:2]}..., got {header[:2]}...", path, 1)
        rows = []
        for row in reader:
            if not row:
                continue
            if len(row) != len(header):
                raise TraceFormatError(
                    f"expected {len(header)} columns, got {len(row)}", path, reader.line_num)
            rows.append([_parse_float(x, path, reader.line_num) for x in row])
    return np.array(rows, dtype=float).reshape(len(rows), len(header))


def read_pv_csv(path) -> np.ndarray:
    """Read a single ``pv_kwh`` column; blank or corrupted cells become 0.0."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise TraceFormatError("empty file", path, 1) from None
        if [h.strip() for h in header] != ["pv_kwh"]:
            raise TraceFormatError(f"header must be ['pv_kwh'], got {header}", path, 1)
        values = []
        for row in reader:
            if not row:
                values.append(0.0)
                continue
            if len(row) != 1:
                raise TraceFormatError(f"expected 1 column, got {len(row)}", path, reader.line_num)
            values.append(max(_parse_float(row[0], path, reader.line_num, allow_blank=True), 0.0))
    return np.array(values, dtype=float)


def write_demand_csv(path, demand) -> None:
    """Write an (intervals, M) array in the demand CSV format."""
    demand = np.atleast_2d(np.asarray(demand, dtype=float))
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"household_{m}" for m in range(demand.shape[1])])
        writer.writerows([[repr(float(x)) for x in row] for row in demand])


def write_pv_csv(path, pv) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["pv_kwh"])
        writer.writerows([[repr(float(x))] for x in np.asarray(pv, dtype=float).reshape(-1)])


def load_csv_traces(demand_path, pv_path, config: TraceConfig) -> list[DayTraces]:
    """Split demand and PV files into per-day traces.

    Forecasts start equal to actuals; inject errors with
    :func:`apply_worst_case_error`.
    """
    demand = read_demand_csv(demand_path)
    pv = read_pv_csv(pv_path)
    T = int(config.T)
    n_rows, M = demand.shape
    if config.categories and len(config.categories) != M:
        raise ShapeMismatchError(
            f"config lists {len(config.categories)} households, {demand_path} has {M}")
    if n_rows == 0 or n_rows % T:
        raise ShapeMismatchError(f"{demand_path}: {n_rows} rows is not a whole number of {T}-interval days")
    if pv.size != n_rows:
        raise ShapeMismatchError(f"{pv_path}: {pv.size} rows, demand file has {n_rows}")
    if config.pv_scales is not None:
        scale = np.asarray(config.pv_scales, dtype=float)
        if scale.shape != (M,):
            raise ShapeMismatchError(f"pv_scales has {scale.size} entries, expected {M}")
    elif config.categories:
        scale = np.array([PV_SCALE[Category(c)] for c in config.categories])
    else:
        scale = np.zeros(M)
    days = n_rows // T
    return [
        DayTraces(demand[k * T:(k + 1) * T].T, pv[k * T:(k + 1) * T], pv_scale=scale)
        for k in range(days)
    ]


# ------------------------------------------------------------- synthetic data


def category_list(mix) -> list[Category]:
    """Expand ``{"LOW": 7, "BASE": 9, ...}`` into an ordered category list."""
    out = []
    for cat in Category:
        out.extend([cat] * int(mix.get(cat.value, mix.get(cat, 0))))
    return out


def _bump(hours, centre, width):
    # circular distance so peaks wrap around midnight
    d = (hours - centre + 12.0) % 24.0 - 12.0
    return np.exp(-0.5 * (d / width) ** 2)


def synth_traces(seed, M=None, T=24, categories=None, day=0, start_hour=0.0, pv_peak=3.7,
                 dt=None) -> DayTraces:
    """Deterministic synthetic day: double-peaked demand and bell-shaped PV.

    ``categories`` (length M) sets each household's consumption level; by
    default all households are BASE. ``day`` (0-364) drives a seasonal cycle
    and selects an independent random stream, so ``(seed, day)`` fully
    determines the output. ``start_hour`` shifts the clock time of interval 0
    and ``dt`` (hours, default ``24 / T``) sets the interval length.
    """
    if categories is None:
        if M is None:
            raise ValueError("give M or categories")
        categories = [Category.BASE] * M
    categories = [Category(c) for c in categories]
    M = len(categories)
    if M < 1 or T < 2:
        raise ValueError("need M >= 1 and T >= 2")

    rng = np.random.default_rng([int(seed), int(day)])
    dt = 24.0 / T if dt is None else float(dt)
    hours = (start_hour + (np.arange(T) + 0.5) * dt) % 24.0
    season = math.cos(2 * math.pi * (day - 15) / 365.0)  # +1 mid-winter, -1 mid-summer

    demand = np.empty((M, T))
    for m, cat in enumerate(categories):
        morning = rng.uniform(0.2, 0.45) * _bump(hours, rng.normal(7.5, 0.5), rng.uniform(1.0, 1.8))
        evening = rng.uniform(0.5, 0.9) * _bump(hours, rng.normal(19.0, 0.7), rng.uniform(1.8, 2.8))
        base = rng.uniform(0.4, 0.55)
        shape = base + morning + evening
        level = _CATEGORY_LEVEL[cat] * (1.0 + 0.15 * season)
        noise = rng.lognormal(0.0, 0.12, size=T)
        demand[m] = level * shape * noise * dt

    daylight = 12.0 - 4.0 * season
    from_noon = (hours - 13.0 + 12.0) % 24.0 - 12.0
    clear = np.where(np.abs(from_noon) < daylight / 2, np.cos(np.pi * from_noon / daylight), 0.0)
    cloud = rng.uniform(0.35, 1.0) * rng.uniform(0.85, 1.0, size=T)
    pv = pv_peak * (0.65 - 0.35 * season) * clear * cloud * dt

    scale = np.array([PV_SCALE[c] for c in categories])
    return DayTraces(demand, pv, pv_scale=scale)
