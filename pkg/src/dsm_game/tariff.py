"""Quadratic grid cost, proportional billing and fixed-price billing."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TariffParams:
    """Cost coefficients of ``g(y) = c2 y^2 + c1 y + c0`` plus the flat price.

    ``fixed_price`` is only used to bill non-participants; its default of
    0.15 per kWh is an arbitrary placeholder, set it from your own data.
    """

    c2: float = 0.03125
    c1: float = 1.0
    c0: float = 0.0
    fixed_price: float = 0.15

    def __post_init__(self):
        if self.c2 <= 0:
            raise ValueError(f"c2 must be positive, got {self.c2}")
        if self.c1 < 0 or self.c0 < 0:
            raise ValueError("c1 and c0 must be non-negative")
        if self.fixed_price <= 0:
            raise ValueError(f"fixed_price must be positive, got {self.fixed_price}")


@dataclass(frozen=True)
class BillingResult:
    bills: np.ndarray
    omega: np.ndarray
    total_cost: float


def stage_cost(aggregate_load, params: TariffParams):
    y = np.asarray(aggregate_load, dtype=float)
    return (params.c2 * y * y + params.c1 * y + params.c0)[()]


def proportional_factor(participant_loads) -> np.ndarray:
    """Share of each participant in the participants' total consumption.

    An all-zero day splits evenly.
    """
    loads = np.atleast_2d(np.asarray(participant_loads, dtype=float))
    if np.any(loads < 0):
        raise ValueError("participant loads must be non-negative")
    per_player = loads.sum(axis=1)
    total = per_player.sum()
    if total <= 0:
        return np.full(loads.shape[0], 1.0 / loads.shape[0])
    return per_player / total


def bill_participants(participant_loads, total_loads, params: TariffParams) -> BillingResult:
    """Split the day's total grid cost among participants by consumption share.

    ``total_loads`` is the aggregate over *all* households per interval; bills
    are reported as positive amounts.
    """
    loads = np.atleast_2d(np.asarray(participant_loads, dtype=float))
    total_loads = np.asarray(total_loads, dtype=float).reshape(-1)
    if loads.shape[1] != total_loads.size:
        raise ValueError(f"{loads.shape[1]} intervals of participant loads vs {total_loads.size} totals")
    omega = proportional_factor(loads)
    total_cost = float(np.sum(stage_cost(total_loads, params)))
    return BillingResult(bills=omega * total_cost, omega=omega, total_cost=total_cost)


def bill_nonparticipant(loads, params: TariffParams) -> float:
    loads = np.asarray(loads, dtype=float)
    if np.any(loads < 0):
        raise ValueError("loads must be non-negative")
    return float(params.fixed_price * loads.sum())


def savings(bill_with_dsm, bill_reference):
    """Relative bill reduction; negative when the scheme made the bill larger."""
    ref = np.asarray(bill_reference, dtype=float)
    if np.any(ref == 0):
        raise ZeroDivisionError("reference bill is zero")
    return ((ref - np.asarray(bill_with_dsm, dtype=float)) / ref)[()]
