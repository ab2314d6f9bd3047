"""scikit-learn style front end to the scheduling game."""
from __future__ import annotations

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .battery import BatteryParams
from .execution import par
from .game import GameSpec, solve_nash, verify_equilibrium
from .tariff import TariffParams
from .validation import check_loads, check_positive, check_vector


class DSMScheduler(BaseEstimator):
    """Equilibrium battery schedules for a group of households.

    ``fit`` takes the forecast net-demand of the N participants as an
    (N, T) array and solves the game. ``predict`` returns the equilibrium
    aggregate load for those forecasts, ``transform`` the per-player loads.

    Parameters
    ----------
    c2, c1, c0 : float
        Quadratic grid cost coefficients.
    battery : BatteryParams or None
        Battery of every player (default: the 13.5 kWh reference unit).
    dt : float
        Interval length in hours.
    tol, max_iter, init, random_state, mode
        Passed to :func:`dsm_game.game.solve_nash`.
    n_households : int or None
        Neighbourhood size M used to average the others' load; ``None``
        means the N players plus nobody else.
    others : {"mean", "sum"}
        How the other households' load enters a player's best response.

    Attributes
    ----------
    schedule_ : (N, T) array
    soc_ : (N, T+1) array
    profile_ : StrategyProfile
    n_iter_ : int
    converged_ : bool
    """

    def __init__(self, c2=0.03125, c1=1.0, c0=0.0, battery=None, dt=1.0, tol=1e-9,
                 max_iter=1000, init="zeros", random_state=None, mode="idealized",
                 n_households=None, others="mean"):
        self.c2 = c2
        self.c1 = c1
        self.c0 = c0
        self.battery = battery
        self.dt = dt
        self.tol = tol
        self.max_iter = max_iter
        self.init = init
        self.random_state = random_state
        self.mode = mode
        self.n_households = n_households
        self.others = others

    def _spec(self, X, background_load, initial_soc):
        N, T = X.shape
        tariff = TariffParams(c2=self.c2, c1=self.c1, c0=self.c0)
        return GameSpec(
            net_demand=X,
            initial_soc=check_vector(initial_soc, N, "initial_soc"),
            background_load=check_vector(background_load, T, "background_load"),
            tariff=tariff,
            batteries=self.battery or BatteryParams(),
            dt=self.dt,
            n_households=self.n_households,
            others=self.others,
        )

    def fit(self, X, y=None, background_load=None, initial_soc=None):
        X = check_loads(X)
        check_positive(self.dt, "dt")
        self.spec_ = self._spec(X, background_load, initial_soc)
        self.profile_ = solve_nash(self.spec_, tol=self.tol, max_iter=self.max_iter,
                                   init=self.init, seed=self.random_state, mode=self.mode)
        self.schedule_ = self.profile_.schedules
        self.soc_ = self.profile_.soc
        self.n_iter_ = self.profile_.iterations
        self.converged_ = self.profile_.converged
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X=None):
        """Per-player loads ``X + schedule_``; ``X`` defaults to the fitted forecast."""
        check_is_fitted(self)
        X = self.spec_.net_demand if X is None else check_loads(X)
        if X.shape != self.schedule_.shape:
            raise ValueError(f"X has shape {X.shape}, schedules have {self.schedule_.shape}")
        return X + self.schedule_

    def predict(self, X=None):
        """Aggregate grid load including the background."""
        return self.transform(X).sum(axis=0) + self.spec_.background_load

    def score(self, X=None, y=None):
        """Negative PAR of the predicted aggregate load (higher is flatter)."""
        return -par(self.predict(X))

    def equilibrium_gap(self):
        """Largest unilateral utility gain available in the fitted profile."""
        check_is_fitted(self)
        return verify_equilibrium(self.spec_, self.profile_)
