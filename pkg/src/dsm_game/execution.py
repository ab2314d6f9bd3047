"""Executing equilibrium schedules against actual demand and PV, day after day."""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import battery as bat
from .game import IDEALIZED, GameSpec, StrategyProfile, solve_nash
from .neighbourhood import DayTraces, ForecastErrorSpec, Household, apply_worst_case_error, net_demand
from .tariff import TariffParams, bill_nonparticipant, bill_participants, savings

logger = logging.getLogger(__name__)


class ZeroLoadError(ValueError):
    pass


def par(aggregate_load) -> float:
    """Peak-to-average ratio ``T * max(L) / sum(L)``."""
    L = np.asarray(aggregate_load, dtype=float).reshape(-1)
    total = L.sum()
    if total <= 0:
        raise ZeroLoadError("PAR is undefined for a load curve with zero total")
    return float(L.size * L.max() / total)


def par_reduction(par_dsm, par_reference):
    """Signed relative PAR change; negative values are improvements."""
    return (np.asarray(par_dsm, dtype=float) - par_reference) / np.asarray(par_reference, dtype=float)


@dataclass(frozen=True)
class DayResult:
    realized_loads: np.ndarray      # M x T
    realized_soc_end: np.ndarray    # N
    aggregate_load: np.ndarray      # T
    par: float
    bills: np.ndarray               # M, participants under proportional billing
    deviations: np.ndarray          # N x T, |executed - scheduled|
    executed: np.ndarray            # N x T
    reference_loads: np.ndarray     # M x T, batteries idle
    reference_par: float
    reference_bills: np.ndarray     # M
    participants: np.ndarray        # indices into households
    predicted_aggregate: Optional[np.ndarray] = None
    profile: Optional[StrategyProfile] = None

    @property
    def par_reduction(self) -> float:
        return float(par_reduction(self.par, self.reference_par))

    @property
    def participant_savings(self) -> np.ndarray:
        p = self.participants
        return savings(self.bills[p], self.reference_bills[p])


def _bill_all(loads, participants, households, tariff):
    bills = np.zeros(loads.shape[0])
    mask = np.zeros(loads.shape[0], dtype=bool)
    mask[participants] = True
    if mask.any():
        bills[mask] = bill_participants(loads[mask], loads.sum(axis=0), tariff).bills
    for m in np.flatnonzero(~mask):
        bills[m] = bill_nonparticipant(loads[m], tariff)
    return bills


def participant_indices(households: Sequence[Household]) -> np.ndarray:
    return np.array([h.id for h in households if h.participant], dtype=int)


def execute_day(schedules, traces: DayTraces, households: Sequence[Household], initial_socs,
                tariff: TariffParams = TariffParams(), dt: float = 1.0) -> DayResult:
    """Follow the schedules as closely as the actual traces allow.

    Per interval and participant: PV surplus charges the battery first
    (DC side, charging efficiency only, up to the interval's charging limit,
    rest curtailed); the scheduled decision is then clipped to what the
    battery and the actual net-demand permit, and applied.
    """
    participants = participant_indices(households)
    schedules = np.atleast_2d(np.asarray(schedules, dtype=float))
    N, T = len(participants), traces.n_intervals
    if schedules.shape != (N, T):
        raise ValueError(f"schedules shape {schedules.shape}, expected {(N, T)}")
    soc = np.array(initial_socs, dtype=float).reshape(-1)
    if soc.shape != (N,):
        raise ValueError(f"{soc.size} initial SOCs for {N} participants")

    demand = traces.actual_demand
    pv = traces.household_pv(forecast=False)
    loads = demand.copy()
    reference = demand.copy()
    executed = np.zeros((N, T))

    # participants sharing a battery model are stepped together
    groups = {}
    for k, m in enumerate(participants):
        groups.setdefault(households[m].battery, []).append(k)
    for b, ks in groups.items():
        ks = np.array(ks)
        ms = participants[ks]
        cv = bat.cv_or_none(b)
        net, excess = net_demand(demand[ms], pv[ms], b.eta_inv)
        net, excess = np.atleast_2d(net), np.atleast_2d(excess)
        reference[ms] = net
        s = soc[ks]
        for t in range(T):
            cap = bat.phi_plus(s, b, cv, dt)
            pv_in = np.minimum(excess[:, t], cap)
            s = np.minimum(s + b.eta_plus * pv_in, b.s_max)
            lower, upper = bat.decision_bounds(s, net[:, t], b, cv, dt)
            upper = np.maximum(np.minimum(upper, cap - pv_in), 0.0)
            a = np.clip(schedules[ks, t], lower, upper)
            s = np.atleast_1d(bat.transition(s, a, b, dt))
            executed[ks, t] = a
            loads[ms, t] = np.maximum(net[:, t] + a, 0.0)
        soc[ks] = s

    aggregate = loads.sum(axis=0)
    ref_aggregate = reference.sum(axis=0)
    return DayResult(
        realized_loads=loads,
        realized_soc_end=soc,
        aggregate_load=aggregate,
        par=par(aggregate),
        bills=_bill_all(loads, participants, households, tariff),
        deviations=np.abs(executed - schedules),
        executed=executed,
        reference_loads=reference,
        reference_par=par(ref_aggregate),
        reference_bills=_bill_all(reference, participants, households, tariff),
        participants=participants,
    )


def game_from_forecast(traces: DayTraces, households: Sequence[Household], initial_socs,
                       tariff: TariffParams = TariffParams(), dt: float = 1.0,
                       others: str = "mean") -> GameSpec:
    """Build the day's game from the forecast traces.

    Non-participants enter as background load; with ``others="mean"`` the
    aggregate of the other households is averaged over all ``M - 1`` of them.
    """
    participants = participant_indices(households)
    mask = np.zeros(traces.n_households, dtype=bool)
    mask[participants] = True
    pv = traces.household_pv(forecast=True)
    batteries = [households[m].battery for m in participants]
    d = np.array([net_demand(traces.forecast_demand[m], pv[m], b.eta_inv)[0]
                  for m, b in zip(participants, batteries)]).reshape(len(participants), traces.n_intervals)
    background = traces.forecast_demand[~mask].sum(axis=0)
    return GameSpec(net_demand=d, initial_soc=initial_socs, background_load=background,
                    tariff=tariff, batteries=batteries, dt=dt,
                    n_households=traces.n_households, others=others)


@dataclass
class ScenarioConfig:
    households: Sequence[Household]
    errors: ForecastErrorSpec = field(default_factory=lambda: ForecastErrorSpec(magnitude=0.0))
    tariff: TariffParams = field(default_factory=TariffParams)
    dt: float = 1.0
    initial_soc: float = 0.0
    chain: bool = True
    tol: float = 1e-9
    max_iter: int = 1000
    init: str = "zeros"
    seed: Optional[int] = None
    mode: str = IDEALIZED
    others: str = "mean"


def run_day(scenario: ScenarioConfig, traces: DayTraces, initial_socs) -> DayResult:
    """Forecast, solve, execute: one round of the scheme."""
    forecast = apply_worst_case_error(traces, scenario.errors)
    spec = game_from_forecast(forecast, scenario.households, initial_socs, scenario.tariff,
                              scenario.dt, scenario.others)
    profile = solve_nash(spec, tol=scenario.tol, max_iter=scenario.max_iter, init=scenario.init,
                         seed=scenario.seed, mode=scenario.mode)
    if not profile.converged:
        logger.warning("solver stopped after %d sweeps, residual %.3e", profile.iterations, profile.residual)
    result = execute_day(profile.schedules, traces, scenario.households, initial_socs, scenario.tariff, scenario.dt)
    return replace(result, profile=profile, predicted_aggregate=profile.aggregate_load(spec))


def chain_days(scenario: ScenarioConfig, days: Sequence[DayTraces]) -> list[DayResult]:
    """Run consecutive days, carrying each day's final SOC into the next."""
    if len(days) < 1:
        raise ValueError("need at least one day")
    n = len(participant_indices(scenario.households))
    start = np.full(n, float(scenario.initial_soc))
    socs = start
    results = []
    for traces in days:
        result = run_day(scenario, traces, socs)
        results.append(result)
        socs = result.realized_soc_end if scenario.chain else start
    return results


@dataclass
class SimulationReport:
    days: int
    daily_par: list
    daily_reference_par: list
    daily_par_reduction: list
    mean_par_reduction: float
    std_par_reduction: float
    mean_savings: float
    std_savings_between_households: float
    household_mean_savings: dict
    convergence: list
    converged_all: bool

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, data) -> "SimulationReport":
        return cls(**data)

    @classmethod
    def from_json(cls, text) -> "SimulationReport":
        return cls.from_dict(json.loads(text))


def report(results: Sequence[DayResult]) -> SimulationReport:
    """Summary statistics over a run of days."""
    if not results:
        raise ValueError("need at least one day result")
    reductions = np.array([r.par_reduction for r in results])
    participants = results[0].participants
    if len(participants):
        per_day = np.array([r.participant_savings for r in results])  # days x N
        per_household = per_day.mean(axis=0)
        mean_savings = float(per_day.mean())
        std_savings = float(per_household.std())
    else:
        per_household = np.array([])
        mean_savings = std_savings = 0.0
    convergence = [
        {"iterations": int(r.profile.iterations), "converged": bool(r.profile.converged),
         "residuals": [float(x) for x in r.profile.residuals]}
        if r.profile is not None else {"iterations": 0, "converged": True, "residuals": []}
        for r in results
    ]
    return SimulationReport(
        days=len(results),
        daily_par=[float(r.par) for r in results],
        daily_reference_par=[float(r.reference_par) for r in results],
        daily_par_reduction=[float(x) for x in reductions],
        mean_par_reduction=float(reductions.mean()),
        std_par_reduction=float(reductions.std()),
        mean_savings=mean_savings,
        std_savings_between_households=std_savings,
        household_mean_savings={str(int(m)): float(v) for m, v in zip(participants, per_household)},
        convergence=convergence,
        converged_all=all(c["converged"] for c in convergence),
    )
