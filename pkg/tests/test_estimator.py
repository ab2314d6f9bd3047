import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from dsm_game.battery import BatteryParams
from dsm_game.estimator import DSMScheduler
from dsm_game.execution import par
from dsm_game.neighbourhood import synth_traces
from dsm_game.validation import check_loads, check_positive, check_vector


@pytest.fixture
def X():
    return synth_traces(3, M=6, T=24).actual_demand


def test_params_round_trip():
    est = DSMScheduler(c2=0.05, tol=1e-8, others="sum", n_households=9)
    params = est.get_params()
    assert params["c2"] == 0.05 and params["others"] == "sum" and params["n_households"] == 9
    twin = clone(est)
    assert twin.get_params() == params
    est.set_params(max_iter=7)
    assert est.max_iter == 7


def test_fit_predict(X):
    est = DSMScheduler().fit(X)
    assert est.converged_ and est.n_features_in_ == 24
    assert est.schedule_.shape == X.shape and est.soc_.shape == (6, 25)
    agg = est.predict()
    np.testing.assert_allclose(agg, (X + est.schedule_).sum(axis=0))
    assert est.score() == pytest.approx(-par(agg))
    assert est.score() > -par(X.sum(axis=0))
    assert est.equilibrium_gap() <= 1e-6


def test_background_and_initial_soc(X):
    bg = np.full(24, 2.0)
    est = DSMScheduler(n_households=10).fit(X, background_load=bg, initial_soc=3.0)
    np.testing.assert_array_equal(est.spec_.initial_soc, 3.0)
    np.testing.assert_allclose(est.predict() - est.transform().sum(axis=0), bg)
    assert est.spec_.others_scale() == pytest.approx(1 / 9)


def test_not_fitted():
    with pytest.raises(NotFittedError):
        DSMScheduler().predict()


def test_transform_shape_check(X):
    est = DSMScheduler().fit(X)
    with pytest.raises(ValueError):
        est.transform(X[:3])


def test_invalid_inputs(X):
    with pytest.raises(ValueError):
        DSMScheduler().fit(-X)
    with pytest.raises(ValueError):
        DSMScheduler(dt=0).fit(X)
    with pytest.raises(ValueError):
        DSMScheduler().fit(X, initial_soc=np.ones(2))
    with pytest.raises(ValueError):
        DSMScheduler().fit(np.full((2, 3), np.nan))


def test_custom_battery(X):
    est = DSMScheduler(battery=BatteryParams(s_max=20.0, s_star=15.0), mode="clamped").fit(X)
    assert np.all(est.soc_ <= 20.0 + 1e-9) and np.all(est.soc_ >= -1e-9)


def test_validation_helpers():
    np.testing.assert_array_equal(check_loads([[1, 2]]), [[1.0, 2.0]])
    np.testing.assert_array_equal(check_vector(None, 3, "v"), [0.0, 0.0, 0.0])
    np.testing.assert_array_equal(check_vector(2, 2, "v"), [2.0, 2.0])
    assert check_vector([-1, 2], 2, "v", allow_negative=True)[0] == -1
    with pytest.raises(ValueError):
        check_vector([-1, 2], 2, "v")
    with pytest.raises(ValueError):
        check_vector([1, 2, 3], 2, "v")
    with pytest.raises(ValueError):
        check_vector([np.inf, 2], 2, "v")
    with pytest.raises(ValueError):
        check_positive(0, "dt")
