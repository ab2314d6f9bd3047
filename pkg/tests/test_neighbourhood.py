import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dsm_game.neighbourhood import (
    Category,
    DayTraces,
    ForecastErrorSpec,
    Household,
    NegativeLoadError,
    ShapeMismatchError,
    TraceConfig,
    TraceFormatError,
    apply_worst_case_error,
    category_list,
    load,
    load_csv_traces,
    make_households,
    net_demand,
    others_load_mean,
    others_load_sum,
    read_demand_csv,
    read_pv_csv,
    synth_traces,
    total_load,
    write_demand_csv,
    write_pv_csv,
)


def test_net_demand_examples():
    net, excess = net_demand(2.0, 1.0, 0.960)
    assert net == pytest.approx(1.04) and excess == 0.0
    net, excess = net_demand(0.0, 3.0, 0.960)
    assert net == 0.0 and excess == pytest.approx(3.0)
    net, excess = net_demand(0.96, 1.0, 0.960)
    assert net == pytest.approx(0.0, abs=1e-15) and excess == pytest.approx(0.0, abs=1e-15)


@settings(max_examples=300, deadline=None)
@given(d=st.floats(0, 20), w=st.floats(0, 20), eta=st.floats(0.5, 1.0))
def test_net_demand_branches_exclusive(d, w, eta):
    net, excess = net_demand(d, w, eta)
    assert net >= 0 and excess >= 0
    assert net == 0 or excess == 0
    # net - eta * excess recovers the signed balance
    assert net - eta * excess == pytest.approx(d - eta * w, abs=1e-9)


def test_worst_case_error_example():
    tr = DayTraces(np.array([[10.0, 0.0]]), np.array([2.0, 0.0]))
    f = apply_worst_case_error(tr, ForecastErrorSpec(0.08, 0.10, 1.0))
    np.testing.assert_allclose(f.forecast_demand, [[9.2, 0.0]])
    np.testing.assert_allclose(f.forecast_pv, [2.2, 0.0])
    same = apply_worst_case_error(tr, ForecastErrorSpec(magnitude=0.0))
    np.testing.assert_array_equal(same.forecast_demand, tr.actual_demand)
    np.testing.assert_array_equal(same.forecast_pv, tr.actual_pv)


def test_forecast_net_demand_never_exceeds_actual():
    tr = apply_worst_case_error(synth_traces(4, M=6, T=24), ForecastErrorSpec())
    actual, _ = net_demand(tr.actual_demand, tr.household_pv(False), 0.96)
    predicted, _ = net_demand(tr.forecast_demand, tr.household_pv(True), 0.96)
    assert np.all(predicted <= actual + 1e-12)


def test_error_spec_validation():
    with pytest.raises(ValueError):
        ForecastErrorSpec(magnitude=1.5)
    with pytest.raises(ValueError):
        ForecastErrorSpec(eps_d=-0.1)


def test_load_examples():
    assert load(2.0, 1.5) == 3.5
    assert load(2.0, -2.0) == 0.0
    assert load(2.0, 0.0) == 2.0
    with pytest.raises(NegativeLoadError):
        load(2.0, -2.5)


def test_total_and_others():
    loads = np.array([1.0, 2.0, 3.0])
    assert total_load(loads) == 6.0
    assert others_load_sum(loads, 1) == 4.0
    assert others_load_sum(np.array([5.0]), 0) == 0.0
    assert others_load_sum(np.full(7, 1.5), 3) == pytest.approx(6 * 1.5)
    assert others_load_mean(loads, 1) == 2.0
    for n in range(3):
        assert total_load(loads) == loads[n] + others_load_sum(loads, n)


def test_households():
    hh = make_households(["LOW", "BASE", "HIGH"], participants=[0, 2])
    assert [h.participant for h in hh] == [True, False, True]
    assert hh[0].pv_scale == 0.3 and hh[2].pv_scale == 0.7
    assert hh[1].battery is None and hh[1].pv_scale == 0.0
    with pytest.raises(ValueError):
        Household(0, True, battery=None)
    assert category_list({"LOW": 1, "HIGH": 2}) == [Category.LOW, Category.HIGH, Category.HIGH]


def test_synth_determinism_and_shape():
    a = synth_traces(11, M=5, T=24)
    b = synth_traces(11, M=5, T=24)
    np.testing.assert_array_equal(a.actual_demand, b.actual_demand)
    np.testing.assert_array_equal(a.actual_pv, b.actual_pv)
    assert a.actual_demand.shape == (5, 24)
    c = synth_traces(12, M=5, T=24)
    assert not np.array_equal(a.actual_demand, c.actual_demand)
    tiny = synth_traces(0, M=1, T=2)
    assert tiny.actual_demand.shape == (1, 2)


def test_synth_category_levels():
    cats = [Category.LOW] * 20 + [Category.HIGH] * 20
    tr = synth_traces(3, T=24, categories=cats)
    assert tr.actual_demand[20:].mean() > tr.actual_demand[:20].mean()
    np.testing.assert_array_equal(tr.pv_scale, [0.3] * 20 + [0.7] * 20)


def test_synth_double_peak_and_midday_pv():
    tr = synth_traces(5, M=25, T=24)
    total = tr.actual_demand.sum(axis=0)
    assert 17 <= int(np.argmax(total)) <= 21
    assert total[7] > total[3] and total[7] > total[11]
    assert 10 <= int(np.argmax(tr.actual_pv)) <= 15
    assert tr.actual_pv[0] == 0.0


def test_daytraces_shape_checks():
    with pytest.raises(ShapeMismatchError):
        DayTraces(np.ones((2, 4)), np.ones(3))
    with pytest.raises(ValueError):
        DayTraces(-np.ones((2, 4)), np.ones(4))


def _write_files(tmp_path, demand, pv):
    dp, pp = tmp_path / "demand.csv", tmp_path / "pv.csv"
    write_demand_csv(dp, demand)
    write_pv_csv(pp, pv)
    return dp, pp


def test_csv_year_split(tmp_path):
    rng = np.random.default_rng(0)
    demand = rng.uniform(0, 3, size=(365 * 24, 25))
    pv = rng.uniform(0, 2, size=365 * 24)
    dp, pp = _write_files(tmp_path, demand, pv)
    days = load_csv_traces(dp, pp, TraceConfig(T=24, categories=["BASE"] * 25))
    assert len(days) == 365
    assert all(d.actual_demand.shape == (25, 24) for d in days)
    np.testing.assert_array_equal(days[3].actual_demand, demand[72:96].T)


def test_csv_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    demand = rng.uniform(0, 3, size=(48, 3))
    pv = rng.uniform(0, 2, size=48)
    dp, pp = _write_files(tmp_path, demand, pv)
    again = read_demand_csv(dp)
    assert np.max(np.abs(again - demand)) <= 1e-12
    assert np.max(np.abs(read_pv_csv(pp) - pv)) <= 1e-12


def test_csv_missing_pv_cells(tmp_path):
    pp = tmp_path / "pv.csv"
    pp.write_text("pv_kwh\n1.5\n\nnan?\n2.0\n")
    np.testing.assert_array_equal(read_pv_csv(pp), [1.5, 0.0, 0.0, 2.0])


def test_csv_short_file(tmp_path):
    dp, pp = _write_files(tmp_path, np.ones((1, 2)), np.ones(1))
    with pytest.raises(ShapeMismatchError):
        load_csv_traces(dp, pp, TraceConfig(T=24))


def test_csv_parse_error_line(tmp_path):
    dp = tmp_path / "demand.csv"
    dp.write_text("household_0,household_1\n1.0,2.0\n1.0,abc\n")
    with pytest.raises(TraceFormatError) as exc:
        read_demand_csv(dp)
    assert exc.value.line == 3
    assert str(dp) in str(exc.value)


def test_csv_household_count_mismatch(tmp_path):
    dp, pp = _write_files(tmp_path, np.ones((24, 3)), np.ones(24))
    with pytest.raises(ShapeMismatchError):
        load_csv_traces(dp, pp, TraceConfig(T=24, categories=["LOW"] * 4))
