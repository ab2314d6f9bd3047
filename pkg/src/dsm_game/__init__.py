"""Battery scheduling for demand-side management as a dynamic game."""
__version__ = "0.1.0"

from .battery import BatteryParams, CvConstants, derive_cv_constants
from .config import ConfigError, RunConfig, load_config
from .estimator import DSMScheduler
from .execution import (DayResult, ScenarioConfig, SimulationReport, chain_days, execute_day,
                        par, par_reduction, report, run_day)
from .game import (GameSpec, SocGrid, StrategyProfile, dp_best_response, oracle_check, solve_nash,
                   verify_equilibrium)
from .neighbourhood import Category, DayTraces, ForecastErrorSpec, Household, synth_traces
from .tariff import TariffParams

__all__ = [
    "BatteryParams", "CvConstants", "derive_cv_constants", "DSMScheduler", "DayResult",
    "ScenarioConfig", "SimulationReport", "chain_days", "execute_day", "par", "par_reduction",
    "report", "run_day", "GameSpec", "SocGrid", "StrategyProfile", "dp_best_response",
    "solve_nash", "verify_equilibrium", "Category", "DayTraces", "ForecastErrorSpec",
    "Household", "synth_traces", "TariffParams", "ConfigError", "RunConfig", "load_config",
    "oracle_check",
]
