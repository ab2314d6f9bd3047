"""Dynamic battery-scheduling game between participating households.

Each player ``n`` picks a schedule ``a_n`` (kWh per stage) and receives

    U_n = -s_n^T - sum_t g(d_n^t + a_n^t + L_{-n}^t)

where ``L_{-n}`` is the load of every other household (other players plus
the non-participating background), averaged over the ``M - 1`` of them by
default or summed with ``others="sum"``. The closed-form best response rolls
forward stage by stage; :func:`dp_best_response` recovers the same schedule by
brute-force backward induction on a SOC grid and serves as its oracle.

Two transition modes exist. ``"idealized"`` uses ``s' = s + a`` with no
bounds, which is what the closed form assumes and what the scheme solves with.
``"clamped"`` projects every stage decision onto the battery's feasible set
and applies the full lossy transition; it exists for sensitivity studies.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

import numpy as np

from . import battery as bat
from .battery import BatteryParams
from .tariff import TariffParams, stage_cost

logger = logging.getLogger(__name__)

IDEALIZED = "idealized"
CLAMPED = "clamped"
MODES = (IDEALIZED, CLAMPED)


class ResolutionError(ValueError):
    pass


@dataclass(frozen=True)
class GameSpec:
    """Inputs of one scheduling day.

    Parameters
    ----------
    net_demand : (N, T) array
        Forecast net-demand of each player.
    initial_soc : (N,) array
        SOC at the start of the day.
    background_load : (T,) array
        Summed forecast load of the non-participating households.
    batteries : BatteryParams or sequence of them
        One shared battery model or one per player.
    """

    net_demand: np.ndarray
    initial_soc: np.ndarray = None
    background_load: np.ndarray = None
    tariff: TariffParams = field(default_factory=TariffParams)
    batteries: Union[BatteryParams, Sequence[BatteryParams]] = field(default_factory=BatteryParams)
    dt: float = 1.0
    n_households: Optional[int] = None
    others: str = "mean"
    # idealized-mode subgames start from SOCs the closed form left unbounded
    check_soc: bool = field(default=True, repr=False)

    def __post_init__(self):
        d = np.atleast_2d(np.asarray(self.net_demand, dtype=float))
        N, T = d.shape
        if T < 1:
            raise ValueError("need at least one stage")
        s0 = np.zeros(N) if self.initial_soc is None else np.asarray(self.initial_soc, dtype=float).reshape(-1)
        bg = np.zeros(T) if self.background_load is None else np.asarray(self.background_load, dtype=float).reshape(-1)
        if s0.shape != (N,) or bg.shape != (T,):
            raise ValueError(f"initial_soc must have {N} entries and background_load {T}")
        batteries = self.batteries
        if isinstance(batteries, BatteryParams):
            batteries = (batteries,) * N
        batteries = tuple(batteries)
        if len(batteries) != N:
            raise ValueError(f"{len(batteries)} batteries for {N} players")
        for n, (b, s) in enumerate(zip(batteries, s0)):
            if self.check_soc and not b.s_min - bat.SOC_TOL <= s <= b.s_max + bat.SOC_TOL:
                raise ValueError(f"player {n}: initial SOC {s} outside [{b.s_min}, {b.s_max}]")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        M = N if self.n_households is None else int(self.n_households)
        if M < N:
            raise ValueError(f"n_households={M} is smaller than the {N} players")
        if self.others not in ("mean", "sum"):
            raise ValueError(f"others must be 'mean' or 'sum', got {self.others!r}")
        object.__setattr__(self, "n_households", M)
        object.__setattr__(self, "net_demand", d)
        object.__setattr__(self, "initial_soc", s0)
        object.__setattr__(self, "background_load", bg)
        object.__setattr__(self, "batteries", batteries)

    @property
    def N(self) -> int:
        return self.net_demand.shape[0]

    @property
    def T(self) -> int:
        return self.net_demand.shape[1]

    def others_scale(self) -> float:
        """Factor turning the summed load of the other households into ``L_{-n}``."""
        if self.others == "sum" or self.n_households < 2:
            return 1.0
        return 1.0 / (self.n_households - 1)


@dataclass(frozen=True)
class StrategyProfile:
    schedules: np.ndarray
    soc: np.ndarray
    iterations: int = 0
    converged: bool = False
    residual: float = float("nan")
    residuals: tuple = ()
    mode: str = IDEALIZED

    def loads(self, spec: GameSpec) -> np.ndarray:
        """Per-player grid loads implied by the schedules (N x T)."""
        return spec.net_demand + self.schedules

    def aggregate_load(self, spec: GameSpec) -> np.ndarray:
        return self.loads(spec).sum(axis=0) + spec.background_load


@dataclass(frozen=True)
class SocGrid:
    """Uniform SOC discretisation for the DP oracle; bounds default to the battery's."""

    resolution: float
    s_min: Optional[float] = None
    s_max: Optional[float] = None

    def nodes(self, params: BatteryParams) -> np.ndarray:
        lo = params.s_min if self.s_min is None else self.s_min
        hi = params.s_max if self.s_max is None else self.s_max
        if self.resolution <= 0:
            raise ResolutionError("resolution must be positive")
        if hi - lo < self.resolution:
            raise ResolutionError(
                f"resolution {self.resolution} exceeds the SOC range [{lo}, {hi}]")
        k = int(np.floor((hi - lo) / self.resolution + 1e-9))
        nodes = lo + self.resolution * np.arange(k + 1)
        if hi - nodes[-1] > 1e-12:
            nodes = np.append(nodes, hi)
        return nodes


def _check_mode(mode):
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")


# ------------------------------------------------------------- best response


def best_response_stage(t, s_t, d_n, others_load, T=None):
    """Closed-form best decision at stage ``t`` given the current SOC.

    The decision levels the player's remaining load with the loads of the
    later stages while emptying the battery by the end of the horizon; at
    ``t = T-1`` it reduces to ``-s_t``.
    """
    d_n = np.asarray(d_n, dtype=float)
    others_load = np.asarray(others_load, dtype=float)
    T = d_n.size if T is None else T
    if not 0 <= t < T:
        raise IndexError(f"stage {t} outside 0..{T - 1}")
    combined = d_n + others_load
    later = combined[t + 1:T].sum()
    return (later - s_t - (T - t - 1) * combined[t]) / (T - t)


def best_response_schedule(spec: GameSpec, n, others_load, mode=IDEALIZED):
    """Roll the closed-form stage response forward from player ``n``'s initial SOC.

    Returns ``(schedule, soc_trajectory)`` of lengths T and T+1.
    """
    _check_mode(mode)
    T = spec.T
    d = spec.net_demand[n]
    combined = d + np.asarray(others_load, dtype=float)
    # suffix[t] = sum of combined[t:]
    suffix = np.concatenate([np.cumsum(combined[::-1])[::-1], [0.0]])
    a = np.empty(T)
    s = np.empty(T + 1)
    s[0] = spec.initial_soc[n]
    params = spec.batteries[n]
    cv = bat.cv_or_none(params) if mode == CLAMPED else None
    for t in range(T):
        a_hat = (suffix[t + 1] - s[t] - (T - t - 1) * combined[t]) / (T - t)
        if mode == IDEALIZED:
            a[t] = a_hat
            s[t + 1] = s[t] + a_hat
        else:
            a[t] = bat.clamp_decision(s[t], a_hat, max(d[t], 0.0), params, cv, spec.dt)
            s[t + 1] = bat.transition(s[t], a[t], params, spec.dt)
    return a, s


def soc_trajectory(spec: GameSpec, n, schedule, mode=IDEALIZED) -> np.ndarray:
    """SOC path of player ``n`` under ``schedule``."""
    _check_mode(mode)
    schedule = np.asarray(schedule, dtype=float)
    s = np.empty(spec.T + 1)
    s[0] = spec.initial_soc[n]
    if mode == IDEALIZED:
        s[1:] = s[0] + np.cumsum(schedule)
        return s
    params = spec.batteries[n]
    for t in range(spec.T):
        s[t + 1] = bat.transition(s[t], schedule[t], params, spec.dt)
    return s


def _others_load(spec: GameSpec, schedules, n):
    """``L_{-n}`` as it enters player ``n``'s stage cost."""
    loads = spec.net_demand + schedules
    summed = loads.sum(axis=0) - loads[n] + spec.background_load
    return summed * spec.others_scale()


def utility_given_others(spec: GameSpec, n, schedule, others_load, mode=IDEALIZED) -> float:
    schedule = np.asarray(schedule, dtype=float)
    s_T = soc_trajectory(spec, n, schedule, mode)[-1]
    aggregate = spec.net_demand[n] + schedule + np.asarray(others_load, dtype=float)
    return float(-s_T - np.sum(stage_cost(aggregate, spec.tariff)))


def utility(spec: GameSpec, n, profile, mode=None) -> float:
    """Utility of player ``n`` (higher is better) under a full strategy profile."""
    if isinstance(profile, StrategyProfile):
        schedules = profile.schedules
        mode = profile.mode if mode is None else mode
    else:
        schedules = np.atleast_2d(np.asarray(profile, dtype=float))
        mode = IDEALIZED if mode is None else mode
    return utility_given_others(spec, n, schedules[n], _others_load(spec, schedules, n), mode)


# ------------------------------------------------------------------ DP oracle


def dp_best_response(spec: GameSpec, n, others_load, grid: SocGrid, n_actions=None, mode=IDEALIZED):
    """Best-response schedule by backward induction over a discretised SOC.

    The value function starts from the terminal penalty ``V(s) = s`` and is
    linearly interpolated between grid nodes. With ``mode="idealized"`` and
    ``n_actions=None`` the candidate decisions are exactly the moves onto
    grid nodes, so no interpolation error enters. Otherwise ``n_actions``
    (default 201) evenly spaced decisions span each state's feasible range.
    """
    _check_mode(mode)
    params = spec.batteries[n]
    nodes = grid.nodes(params)
    lo_s, hi_s = nodes[0], nodes[-1]
    T = spec.T
    combined = spec.net_demand[n] + np.asarray(others_load, dtype=float)
    tariff = spec.tariff
    cv = bat.cv_or_none(params)
    exact = mode == IDEALIZED and n_actions is None
    n_actions = 201 if n_actions is None else int(n_actions)
    demand = spec.net_demand[n]

    def candidates(s, t):
        s = np.atleast_1d(s)
        if exact:
            return nodes[None, :] - s[:, None], np.broadcast_to(nodes, (s.size, nodes.size))
        if mode == IDEALIZED:
            lo, hi = lo_s - s, hi_s - s
        else:
            lo, hi = bat.decision_bounds(s, max(demand[t], 0.0), params, cv, spec.dt)
        frac = np.linspace(0.0, 1.0, n_actions)
        actions = lo[:, None] + (hi - lo)[:, None] * frac[None, :]
        if mode == IDEALIZED:
            nxt = s[:, None] + actions
        else:
            nxt = bat.transition(np.broadcast_to(s[:, None], actions.shape), actions, params, spec.dt)
        return actions, np.clip(nxt, lo_s, hi_s)

    def stage_totals(s, t, v_next):
        actions, nxt = candidates(s, t)
        future = v_next[None, :] if exact else np.interp(nxt, nodes, v_next)
        return actions, stage_cost(combined[t] + actions, tariff) + future

    values = [None] * (T + 1)
    values[T] = nodes.copy()  # terminal penalty
    for t in range(T - 1, -1, -1):
        _, totals = stage_totals(nodes, t, values[t + 1])
        values[t] = totals.min(axis=1)

    schedule = np.empty(T)
    s = float(spec.initial_soc[n])
    for t in range(T):
        actions, totals = stage_totals(s, t, values[t + 1])
        k = int(np.argmin(totals[0]))
        schedule[t] = actions[0, k]
        if mode == IDEALIZED:
            s = s + schedule[t]
        else:
            s = float(bat.transition(s, schedule[t], params, spec.dt))
    return schedule


# ----------------------------------------------------------------- solver


def solve_nash(spec: GameSpec, tol=1e-9, max_iter=1000, init="zeros", seed=None,
               mode=IDEALIZED, order=None) -> StrategyProfile:
    """Iterated best responses, players updated one after another.

    Stops once a full sweep changes no schedule entry by more than ``tol``
    (kWh). A single player is already at a fixed point after its first
    update, since its best response ignores its own previous schedule.
    Hitting ``max_iter`` returns the last profile with ``converged=False``.
    """
    _check_mode(mode)
    if tol <= 0 or max_iter < 1:
        raise ValueError("need tol > 0 and max_iter >= 1")
    N, T = spec.N, spec.T
    if init == "zeros":
        schedules = np.zeros((N, T))
    elif init == "random":
        rng = np.random.default_rng(seed)
        scale = np.array([b.rho_plus for b in spec.batteries])[:, None] * spec.dt
        schedules = rng.uniform(-0.5, 0.5, size=(N, T)) * scale
    else:
        raise ValueError(f"init must be 'zeros' or 'random', got {init!r}")
    order = list(range(N)) if order is None else list(order)
    if sorted(order) != list(range(N)):
        raise ValueError("order must be a permutation of the players")

    soc = np.array([soc_trajectory(spec, n, schedules[n], IDEALIZED) for n in range(N)])
    loads = spec.net_demand + schedules
    total = loads.sum(axis=0) + spec.background_load
    scale = spec.others_scale()
    residuals = []
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        change = 0.0
        for n in order:
            others = total - loads[n]
            a_new, s_new = best_response_schedule(spec, n, others * scale, mode)
            change = max(change, float(np.max(np.abs(a_new - schedules[n]))))
            schedules[n] = a_new
            soc[n] = s_new
            loads[n] = spec.net_demand[n] + a_new
            total = others + loads[n]
        residuals.append(change)
        logger.debug("sweep %d: max schedule change %.3e", iterations, change)
        if change <= tol or N == 1:
            converged = True
            break
    return StrategyProfile(
        schedules=schedules, soc=soc, iterations=iterations, converged=converged,
        residual=residuals[-1], residuals=tuple(residuals), mode=mode,
    )


def verify_equilibrium(spec: GameSpec, profile: StrategyProfile, tol=None) -> float:
    """Largest utility gain any single player could get by deviating.

    A profile is an equilibrium (to ``tol``) when the returned value is
    ``<= tol``. With ``tol`` given, a warning is logged on failure.
    """
    worst = -np.inf
    for n in range(spec.N):
        others = _others_load(spec, profile.schedules, n)
        a_br, _ = best_response_schedule(spec, n, others, profile.mode)
        gain = (utility_given_others(spec, n, a_br, others, profile.mode)
                - utility_given_others(spec, n, profile.schedules[n], others, profile.mode))
        worst = max(worst, gain)
    if tol is not None and worst > tol:
        logger.warning("profile is not an equilibrium: gain %.3e > %.3e", worst, tol)
    return float(worst)


def subgame(spec: GameSpec, profile: StrategyProfile, t):
    """Game and profile restricted to stages ``t..T-1``, started from the profile's SOC at ``t``."""
    if not 0 <= t < spec.T:
        raise IndexError(f"stage {t} outside 0..{spec.T - 1}")
    sub_spec = replace(
        spec,
        net_demand=spec.net_demand[:, t:],
        initial_soc=profile.soc[:, t],
        background_load=spec.background_load[t:],
        check_soc=profile.mode != IDEALIZED,
    )
    sub_profile = replace(profile, schedules=profile.schedules[:, t:], soc=profile.soc[:, t:])
    return sub_spec, sub_profile


def subgame_truncation_check(spec: GameSpec, profile: StrategyProfile, t) -> float:
    """Equilibrium gap of the truncated profile in the subgame starting at ``t``."""
    sub_spec, sub_profile = subgame(spec, profile, t)
    return verify_equilibrium(sub_spec, sub_profile)


# ------------------------------------------------------------ oracle suite


def oracle_instance(rng, T, resolution=0.01, battery=None, max_tries=1000):
    """Random single-player game whose closed-form response stays inside the battery.

    The initial SOC lies on the ``resolution`` grid and the other households'
    load is drawn independently. Instances whose idealized trajectory leaves
    ``[s_min, s_max]`` or whose loads go negative are redrawn.
    """
    params = BatteryParams() if battery is None else battery
    for _ in range(max_tries):
        d = rng.uniform(0.5, 4.0, size=T)
        others = rng.uniform(0.0, 6.0, size=T)
        steps = int(round((params.s_max - params.s_min) / resolution))
        s0 = params.s_min + resolution * rng.integers(0, steps // 2 + 1)
        spec = GameSpec(net_demand=d[None, :], initial_soc=[s0], background_load=np.zeros(T),
                        batteries=params, check_soc=False)
        a, s = best_response_schedule(spec, 0, others)
        inside = np.all(s >= params.s_min) and np.all(s <= params.s_max)
        if inside and np.all(d + a >= 0):
            return spec, others
    raise RuntimeError(f"no non-binding instance found in {max_tries} draws")


def oracle_check(n_instances=100, seed=0, resolution=0.01, horizons=(2, 3, 4)):
    """Compare the DP oracle with the closed-form response on random instances.

    Returns a dict with the largest per-stage discrepancy (kWh) and the
    number of instances per horizon.
    """
    rng = np.random.default_rng(seed)
    grid = SocGrid(resolution)
    worst = 0.0
    counts = {int(T): 0 for T in horizons}
    for k in range(n_instances):
        T = int(horizons[k % len(horizons)])
        spec, others = oracle_instance(rng, T, resolution)
        closed, _ = best_response_schedule(spec, 0, others)
        dp = dp_best_response(spec, 0, others, grid)
        worst = max(worst, float(np.max(np.abs(dp - closed))))
        counts[T] += 1
    return {"instances": n_instances, "resolution": resolution, "seed": seed,
            "per_horizon": counts, "max_discrepancy": worst}
