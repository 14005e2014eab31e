"""Expectation-driven oil market simulation on a small stock/flow engine."""
from .engine import (AlgebraicLoop, CompiledModel, Event, ModelSpec, SimState,
                     SimulationError, Trajectory, VariableDef, compile, simulate, step)
from .oil import (InitialConditions, OilParams, build_oil_model, default_initial)
from .dataio import TimeSeries, load_series, resample, write_series
from .calibration import FitReport, calibrate_core, fit_ols
from .metrics import BacktestMetrics
from .scenario import ScenarioConfig, forecast, parse_scenario, run_scenario

__version__ = "0.1.0"

__all__ = [
    "AlgebraicLoop", "BacktestMetrics", "CompiledModel", "Event", "FitReport",
    "InitialConditions", "ModelSpec", "OilParams", "ScenarioConfig", "SimState",
    "SimulationError", "TimeSeries", "Trajectory", "VariableDef", "build_oil_model",
    "calibrate_core", "compile", "default_initial", "fit_ols", "forecast", "load_series",
    "parse_scenario", "resample", "run_scenario", "simulate", "step", "write_series",
]
