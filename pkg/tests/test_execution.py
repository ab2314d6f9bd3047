import math

import numpy as np
import pytest

from dsm_game.battery import BatteryParams, derive_cv_constants
from dsm_game.execution import (
    ScenarioConfig,
    SimulationReport,
    ZeroLoadError,
    chain_days,
    execute_day,
    game_from_forecast,
    par,
    par_reduction,
    report,
    run_day,
)
from dsm_game.neighbourhood import Category, DayTraces, ForecastErrorSpec, make_households, synth_traces
from dsm_game.tariff import TariffParams, stage_cost

P = BatteryParams()
EFF_OUT = P.eta_inv * P.eta_minus
IDEAL = BatteryParams(eta_plus=1, eta_minus=1, eta_inv=1, rho_plus=1e3, rho_minus=-1e3,
                      rho_bar=0.0, s_max=1e4, s_star=0.99e4)
MIX = [Category.LOW] * 2 + [Category.BASE] * 3 + [Category.HIGH] * 3


def test_par_examples():
    assert par(np.full(24, 3.0)) == 1.0
    spike = np.zeros(24)
    spike[5] = 2.0
    assert par(spike) == 24.0
    assert par([1.0, 3.0]) == 1.5
    with pytest.raises(ZeroLoadError):
        par(np.zeros(4))


def test_par_reduction_table2():
    assert par_reduction(1.114, 1.650) == pytest.approx(-0.325, abs=5e-4)
    assert par_reduction(1.231, 1.685) == pytest.approx(-0.269, abs=5e-4)
    assert par_reduction(1.3, 1.3) == 0.0


def _one_household(demand):
    demand = np.atleast_2d(demand)
    return DayTraces(demand, np.zeros(demand.shape[1])), make_households([Category.BASE])


def test_discharge_clamped_by_soc():
    traces, hh = _one_household([3.0])
    s0 = 1.2 / EFF_OUT  # supports exactly 1.2 kWh out of the inverter
    res = execute_day([[-2.0]], traces, hh, [s0])
    assert res.executed[0, 0] == pytest.approx(-1.2)
    assert res.deviations[0, 0] == pytest.approx(0.8)
    assert res.realized_soc_end[0] == pytest.approx(0.0, abs=1e-12)


def test_charge_clamped_by_phi_plus():
    cv = derive_cv_constants(P)
    s0 = P.s_max - 1.0 / -math.expm1(-1.0 / cv.gamma2)  # phi_plus(s0) == 1
    traces, hh = _one_household([1.0])
    res = execute_day([[3.0]], traces, hh, [s0])
    assert res.executed[0, 0] == pytest.approx(1.0)
    assert res.realized_loads[0, 0] == pytest.approx(2.0)


def test_pv_surplus_charges_before_schedule():
    traces = DayTraces(np.array([[0.5, 2.0]]), np.array([4.0, 0.0]), pv_scale=[1.0])
    hh = make_households([Category.BASE], pv_scales=[1.0])
    res = execute_day([[0.0, -1.0]], traces, hh, [0.0])
    surplus = 4.0 - 0.5 / P.eta_inv
    s1 = P.eta_plus * surplus * (1 + P.rho_bar)  # idle for the rest of the interval
    assert res.realized_loads[0, 0] == 0.0
    assert res.executed[0, 1] == -1.0
    assert res.realized_soc_end[0] == pytest.approx(s1 - 1.0 / EFF_OUT)


def test_nonparticipants_pass_through():
    tr = synth_traces(2, T=24, categories=MIX)
    hh = make_households(MIX, participants=[0, 3, 5])
    res = run_day(ScenarioConfig(households=hh), tr, np.zeros(3))
    others = [1, 2, 4, 6, 7]
    np.testing.assert_array_equal(res.realized_loads[others], tr.actual_demand[others])
    np.testing.assert_allclose(res.bills[others], 0.15 * tr.actual_demand[others].sum(axis=1))


def test_game_counts_all_households():
    tr = synth_traces(2, T=24, categories=MIX)
    hh = make_households(MIX, participants=[0, 3])
    spec = game_from_forecast(tr, hh, np.zeros(2))
    assert spec.N == 2 and spec.n_households == 8
    np.testing.assert_allclose(spec.background_load, tr.forecast_demand[[1, 2, 4, 5, 6, 7]].sum(axis=0))


def test_zero_error_matches_prediction():
    tr = synth_traces(4, T=24, categories=MIX)
    hh = make_households(MIX, battery=IDEAL)
    res = run_day(ScenarioConfig(households=hh), tr, 0.5 * tr.actual_demand.sum(axis=1))
    assert np.max(res.deviations) == 0.0
    assert np.max(np.abs(res.aggregate_load - res.predicted_aggregate)) <= 1e-9
    # the terminal penalty empties every battery, so the next day starts at 0
    np.testing.assert_allclose(res.realized_soc_end, 0.0, atol=1e-9)


@pytest.mark.parametrize("magnitude", [0.0, 0.3, 0.6, 1.0])
def test_realized_state_feasible_under_errors(magnitude):
    days = [synth_traces(6, T=24, categories=MIX, day=k) for k in range(0, 365, 40)]
    hh = make_households(MIX)
    sc = ScenarioConfig(households=hh, errors=ForecastErrorSpec(magnitude=magnitude))
    for r in chain_days(sc, days):
        assert np.all(r.realized_loads >= 0)
        assert np.all(r.realized_soc_end >= P.s_min - 1e-9)
        assert np.all(r.realized_soc_end <= P.s_max + 1e-9)
        assert r.par >= 1.0


def test_deviation_zero_where_feasible():
    tr = synth_traces(9, T=24, categories=MIX)
    hh = make_households(MIX)
    r = run_day(ScenarioConfig(households=hh, errors=ForecastErrorSpec()), tr, np.full(8, 5.0))
    assert r.deviations.max() > 0
    # a feasible schedule (the one actually executed) goes through untouched
    again = execute_day(r.executed, tr, hh, np.full(8, 5.0))
    np.testing.assert_array_equal(again.deviations, 0.0)
    np.testing.assert_array_equal(again.realized_loads, r.realized_loads)


def test_billing_conservation():
    tr = synth_traces(10, T=24, categories=MIX)
    hh = make_households(MIX, participants=[1, 2, 6])
    r = run_day(ScenarioConfig(households=hh), tr, np.zeros(3))
    total = np.sum(stage_cost(r.aggregate_load, TariffParams()))
    assert abs(r.bills[r.participants].sum() - total) <= 1e-9


def test_chain_single_day_equals_execute():
    tr = synth_traces(1, T=24, categories=MIX)
    hh = make_households(MIX)
    sc = ScenarioConfig(households=hh)
    [chained] = chain_days(sc, [tr])
    direct = execute_day(chained.profile.schedules, tr, hh, np.zeros(8))
    np.testing.assert_array_equal(chained.realized_loads, direct.realized_loads)
    with pytest.raises(ValueError):
        chain_days(sc, [])


def test_chain_carries_soc():
    days = [synth_traces(3, T=24, categories=MIX, day=k) for k in range(7)]
    results = chain_days(ScenarioConfig(households=make_households(MIX), initial_soc=2.0), days)
    np.testing.assert_array_equal(results[0].profile.soc[:, 0], 2.0)
    for prev, nxt in zip(results, results[1:]):
        np.testing.assert_array_equal(nxt.profile.soc[:, 0], prev.realized_soc_end)
    unchained = chain_days(ScenarioConfig(households=make_households(MIX), chain=False), days)
    assert all(np.all(r.profile.soc[:, 0] == 0.0) for r in unchained)


def test_report_basics():
    tr = synth_traces(1, T=24, categories=MIX)
    rep = report(chain_days(ScenarioConfig(households=make_households(MIX)), [tr]))
    assert rep.days == 1 and rep.std_par_reduction == 0.0
    assert rep.converged_all
    with pytest.raises(ValueError):
        report([])


def test_identical_participants_equal_savings():
    d = np.tile(synth_traces(2, M=1, T=24).actual_demand, (3, 1))
    tr = DayTraces(d, np.zeros(24))
    hh = make_households([Category.BASE] * 3)
    rep = report(chain_days(ScenarioConfig(households=hh), [tr]))
    assert rep.std_savings_between_households == pytest.approx(0.0, abs=1e-9)


def test_year_report_round_trip():
    days = [synth_traces(5, T=24, categories=MIX[:4], day=k) for k in range(365)]
    results = chain_days(ScenarioConfig(households=make_households(MIX[:4])), days)
    assert len(results) == 365
    rep = report(results)
    assert SimulationReport.from_json(rep.to_json()) == rep
