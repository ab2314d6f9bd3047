"""Lithium-ion home battery: CC/CV charging limits, discharging limits and
the piecewise state transition.

All functions accept scalars or numpy arrays (broadcast elementwise), so the
same code path serves single-household checks and vectorised execution over
a whole neighbourhood.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

#: Slack allowed on SOC bounds before a transition is declared infeasible (kWh).
SOC_TOL = 1e-9


class DegenerateBatteryError(ValueError):
    """Raised when a battery has no constant-voltage region (s_star >= s_max)."""


class InfeasibleDecisionError(ValueError):
    """Raised when a decision would push the SOC outside [s_min, s_max]."""


@dataclass(frozen=True)
class BatteryParams:
    """Physical parameters of one storage unit.

    Defaults are the Tesla Powerwall 2 inspired values (13.5 kWh, 5 kW charge,
    7 kW discharge, 91.8 % round trip split evenly between charge and discharge).
    """

    eta_plus: float = 0.958
    eta_minus: float = 0.958
    eta_inv: float = 0.960
    rho_plus: float = 5.0
    rho_minus: float = -7.0
    rho_bar: float = -0.001
    s_max: float = 13.5
    s_min: float = 0.0
    s_star: float = 9.46

    def __post_init__(self):
        for name in ("eta_plus", "eta_minus", "eta_inv"):
            value = getattr(self, name)
            if not 0.0 < value <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1], got {value}")
        if self.rho_plus <= 0:
            raise ValueError(f"rho_plus must be positive, got {self.rho_plus}")
        if self.rho_minus >= 0:
            raise ValueError(f"rho_minus must be negative, got {self.rho_minus}")
        if not -1.0 < self.rho_bar <= 0.0:
            raise ValueError(f"rho_bar must lie in (-1, 0], got {self.rho_bar}")
        if not 0.0 <= self.s_min <= self.s_star <= self.s_max:
            raise ValueError(
                "need 0 <= s_min <= s_star <= s_max, got "
                f"s_min={self.s_min}, s_star={self.s_star}, s_max={self.s_max}"
            )

    @property
    def round_trip(self) -> float:
        """Grid-to-grid efficiency of storing and retrieving energy."""
        return self.eta_inv**2 * self.eta_plus * self.eta_minus


@dataclass(frozen=True)
class CvConstants:
    t_star: float
    gamma2: float
    gamma1: float


def derive_cv_constants(params: BatteryParams) -> CvConstants:
    """Constants making the SOC-vs-time charging curve C1-smooth at (t*, s*).

    In the CV stage the SOC follows ``s_max * (1 - gamma1 * exp(-t / gamma2))``.
    Matching value and slope with the CC line ``rho_plus * t`` at ``t_star``
    fixes both constants.
    """
    if params.s_star >= params.s_max:
        raise DegenerateBatteryError(
            f"s_star={params.s_star} leaves no CV region below s_max={params.s_max}"
        )
    headroom = params.s_max - params.s_star
    t_star = params.s_star / params.rho_plus
    gamma2 = headroom / params.rho_plus
    gamma1 = headroom * np.exp(t_star / gamma2) / params.s_max
    return CvConstants(t_star=t_star, gamma2=gamma2, gamma1=gamma1)


def cv_or_none(params: BatteryParams) -> CvConstants | None:
    """CV constants, or ``None`` for a battery that only charges in CC mode."""
    try:
        return derive_cv_constants(params)
    except DegenerateBatteryError:
        return None


def phi_plus(s, params: BatteryParams, cv: CvConstants | None, dt: float):
    """Largest admissible charging decision for one interval of ``dt`` hours.

    Below ``s_star`` the battery charges linearly at ``rho_plus``; an interval
    that reaches ``s_star`` continues along the CV exponential for the time it
    has left. ``cv=None`` selects pure-CC mode (capped at ``s_max - s``).
    """
    s = np.asarray(s, dtype=float)
    if cv is None:
        out = np.minimum(params.rho_plus * dt, params.s_max - s)
        return np.maximum(out, 0.0)[()]

    cc_gap = np.maximum(params.s_star - s, 0.0)
    time_to_cv = cc_gap / params.rho_plus
    in_cc = s < params.s_star

    remaining = np.maximum(dt - time_to_cv, 0.0)
    crossing = cc_gap + (params.s_max - params.s_star) * -np.expm1(-remaining / cv.gamma2)
    cc_value = np.where(dt <= time_to_cv, params.rho_plus * dt, crossing)

    cv_value = np.maximum(params.s_max - s, 0.0) * -np.expm1(-dt / cv.gamma2)
    return np.where(in_cc, cc_value, cv_value)[()]


def phi_minus(s, params: BatteryParams, dt: float):
    """Most negative admissible discharging decision (<= 0), rate- or SOC-limited."""
    s = np.asarray(s, dtype=float)
    eff = params.eta_inv * params.eta_minus
    by_rate = params.rho_minus * dt * eff
    by_soc = -np.maximum(s - params.s_min, 0.0) * eff
    return np.maximum(by_rate, by_soc)[()]


def transition(s, a, params: BatteryParams, dt: float):
    """SOC after applying decision ``a`` for ``dt`` hours.

    ``a > 0`` charges through the inverter, ``a < 0`` discharges, and exactly
    ``a == 0`` lets the battery self-discharge.
    """
    s = np.asarray(s, dtype=float)
    a = np.asarray(a, dtype=float)
    charged = s + params.eta_inv * params.eta_plus * a
    discharged = s + a / (params.eta_inv * params.eta_minus)
    # Self-discharge never drags the SOC below s_min on its own.
    idle = np.maximum(s * (1.0 + params.rho_bar) ** dt, np.minimum(s, params.s_min))
    out = np.where(a > 0, charged, np.where(a < 0, discharged, idle))

    if np.any(out < params.s_min - SOC_TOL) or np.any(out > params.s_max + SOC_TOL):
        raise InfeasibleDecisionError(
            f"decision {a!r} from SOC {s!r} leaves [{params.s_min}, {params.s_max}]"
        )
    return np.clip(out, params.s_min, params.s_max)[()]


def decision_bounds(s, net_demand, params: BatteryParams, cv: CvConstants | None, dt: float):
    """Feasible interval ``[max(-net_demand, phi_minus), phi_plus]`` for a decision."""
    lower = np.maximum(-np.asarray(net_demand, dtype=float), phi_minus(s, params, dt))
    upper = phi_plus(s, params, cv, dt)
    return lower, upper


def clamp_decision(s, a_raw, net_demand, params: BatteryParams, cv: CvConstants | None, dt: float):
    """Project a desired decision onto what the battery and the demand allow."""
    if np.any(np.asarray(net_demand) < 0):
        raise ValueError("net_demand must be non-negative")
    lower, upper = decision_bounds(s, net_demand, params, cv, dt)
    return np.clip(a_raw, lower, upper)[()]
