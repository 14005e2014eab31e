"""Least-squares calibration of the oil model against historical series.

The core fit runs in three ordinary-least-squares stages over a common daily
grid:

a. price gain: daily log-price change on the demand/supply ratio gap;
b. price elasticities: log-growth of total supply and of total demand on
   the smoothed log price gap (reference = window mean price);
c. expectation weights: the log expectation ratio implied by the price path
   (given the gain from stage a) on the smoothed driver channels.
"""
from __future__ import annotations

import datetime as dt
import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import dataio
from .dataio import TimeSeries
from .metrics import BacktestMetrics, score
from .oil import (DAYS_PER_YEAR, DEMAND, SUPPLY, OilParams, ScheduledChange,
                  schedule_value)
from .scenario import simulate_config

log = logging.getLogger(__name__)

CONDITION_WARNING = 1e8


class CalibrationError(ValueError):
    pass


class RankDeficient(CalibrationError):
    def __init__(self, columns: Sequence[str]):
        self.columns = tuple(columns)
        super().__init__("rank-deficient design; dependent column(s): " + ", ".join(self.columns))


class TooFewRows(CalibrationError):
    pass


class InsufficientOverlap(CalibrationError):
    pass


@dataclass
class DesignMatrix:
    columns: tuple[str, ...]
    x: np.ndarray
    response: str
    y: np.ndarray
    n_dropped: int = 0

    def __post_init__(self):
        self.columns = tuple(self.columns)
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.x.ndim != 2 or self.x.shape[1] != len(self.columns):
            raise ValueError("x must be 2-d with one column per name")
        if self.y.shape != (self.x.shape[0],):
            raise ValueError("response length does not match rows")
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.y))):
            raise ValueError("design matrix contains non-finite entries")
        if self.x.shape[0] < self.x.shape[1]:
            raise TooFewRows(f"{self.x.shape[0]} rows for {self.x.shape[1]} columns")

    @classmethod
    def from_columns(cls, regressors: Mapping[str, Sequence[float]], response: str,
                     y: Sequence[float], intercept: bool = True) -> "DesignMatrix":
        """Assemble a design, dropping rows with any non-finite entry."""
        cols = {}
        if intercept:
            cols["intercept"] = np.ones(len(y))
        cols.update({k: np.asarray(v, dtype=float) for k, v in regressors.items()})
        x = np.column_stack(list(cols.values())) if cols else np.empty((len(y), 0))
        y = np.asarray(y, dtype=float)
        ok = np.all(np.isfinite(x), axis=1) & np.isfinite(y)
        dropped = int((~ok).sum())
        if dropped:
            log.info("%s: dropped %d non-finite row(s)", response, dropped)
        return cls(tuple(cols), x[ok], response, y[ok], dropped)


@dataclass
class FitReport:
    coefficients: dict[str, float]
    r_squared: float
    residual_std: float
    condition_warning: bool
    std_errors: dict[str, float] = field(default_factory=dict)
    condition_number: float = 1.0
    n_obs: int = 0
    n_dropped: int = 0
    response: str = ""
    residuals: np.ndarray = field(default=None, repr=False, compare=False)
    fitted: np.ndarray = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        return {
            "response": self.response,
            "coefficients": dict(self.coefficients),
            "std_errors": dict(self.std_errors),
            "r_squared": self.r_squared,
            "residual_std": self.residual_std,
            "condition_number": self.condition_number,
            "condition_warning": self.condition_warning,
            "n_obs": self.n_obs,
            "n_dropped": self.n_dropped,
        }


def _dependent_columns(xs: np.ndarray, names: Sequence[str]) -> list[str]:
    bad, kept = [], []
    for j, name in enumerate(names):
        trial = kept + [j]
        if np.linalg.matrix_rank(xs[:, trial]) < len(trial):
            bad.append(name)
        else:
            kept.append(j)
    return bad


def fit_ols(x: DesignMatrix) -> FitReport:
    """Ordinary least squares through the normal equations.

    Columns are scaled to unit norm before forming X'X; a single step of
    iterative refinement tightens the residual orthogonality.
    """
    X, y = x.x, x.y
    n, k = X.shape
    if k == 0:
        raise ValueError("design has no columns")
    norms = np.linalg.norm(X, axis=0)
    zero = [c for c, v in zip(x.columns, norms) if v == 0.0]
    if zero:
        raise RankDeficient(zero)
    xs = X / norms
    bad = _dependent_columns(xs, x.columns)
    if bad:
        raise RankDeficient(bad)

    a = xs.T @ xs
    cond = float(np.linalg.cond(a))
    beta_s = np.linalg.solve(a, xs.T @ y)
    beta_s = beta_s + np.linalg.solve(a, xs.T @ (y - xs @ beta_s))
    beta = beta_s / norms

    fitted = X @ beta
    resid = y - fitted
    ssr = float(resid @ resid)
    has_intercept = any(np.ptp(X[:, j]) == 0.0 for j in range(k))
    tss = float(((y - y.mean()) ** 2).sum()) if has_intercept else float(y @ y)
    if tss > 0:
        r2 = 1.0 - ssr / tss
    else:
        r2 = 1.0 if ssr <= 1e-24 * max(1.0, float(y @ y)) else 0.0
    r2 = min(1.0, max(0.0, r2))
    dof = n - k
    s2 = ssr / dof if dof > 0 else 0.0
    cov_diag = np.diag(np.linalg.inv(a)) / norms ** 2 * s2
    return FitReport(
        coefficients={c: float(b) for c, b in zip(x.columns, beta)},
        r_squared=float(r2),
        residual_std=math.sqrt(s2),
        condition_warning=cond > CONDITION_WARNING,
        std_errors={c: float(math.sqrt(max(v, 0.0))) for c, v in zip(x.columns, cov_diag)},
        condition_number=cond,
        n_obs=n,
        n_dropped=x.n_dropped,
        response=x.response,
        residuals=resid,
        fitted=fitted,
    )


def fit_log_trend(series: TimeSeries, start: dt.date | None = None,
                  end: dt.date | None = None) -> tuple[float, FitReport]:
    """Exponential growth rate (fraction per year) of a positive series."""
    s = series.window(start or series.dates[0], end or series.dates[-1])
    if len(s) < 3:
        raise InsufficientOverlap(f"{series.name}: need at least 3 points for a trend")
    years = s.offsets(s.dates[0]) / DAYS_PER_YEAR
    rep = fit_ols(DesignMatrix.from_columns({"years": years}, f"log_{s.name}",
                                            np.log(s.values)))
    return rep.coefficients["years"], rep


# -- channel reconstruction (mirrors the model's Euler recurrences) ----------

def smooth_series(x: np.ndarray, tau: float, dt_days: float, initial: float = 0.0) -> np.ndarray:
    out = np.empty_like(x, dtype=float)
    s = initial
    for i, xi in enumerate(x):
        out[i] = s
        s = s + dt_days * (xi - s) / tau
    return out


def smoothed_derivative_series(x: np.ndarray, tau: float, dt_days: float) -> np.ndarray:
    out = np.empty_like(x, dtype=float)
    prev, d = x[0], 0.0
    for i, xi in enumerate(x):
        out[i] = d
        raw = (xi - prev) / dt_days
        d = d + dt_days * (raw - d) / tau
        prev = xi
    return out


def driver_channels(base: OilParams, times: np.ndarray,
                    drivers: Mapping[str, Sequence[ScheduledChange]],
                    growth: Mapping[str, np.ndarray], dt_days: float) -> dict[str, np.ndarray]:
    """Smoothed driver channels on the grid, keyed by the weight they feed."""
    def sched(name):
        return np.array([schedule_value(drivers.get(name, ()), t) for t in times])

    ch = {
        "w_opec": smooth_series(sched("opec_decision"), base.tau_exp_s, dt_days),
        "w_geo": smooth_series(sched("geopolitical_upset"), base.tau_exp_s, dt_days),
        "w_dep": np.minimum(sched("econ_depression"), 1.0),
        "w_pol": smooth_series(sched("policy_effect"), base.tau_policy_fast, dt_days),
    }
    momentum = np.zeros(len(times))
    for g in ("growth_eus", "growth_ribc"):
        series = growth.get(g, np.zeros(len(times))) + sched(g)
        momentum += DAYS_PER_YEAR * smoothed_derivative_series(series, base.tau_exp_d, dt_days)
    ch["w_growth"] = momentum
    return ch


# sign with which each channel enters ln(ExD) - ln(ExS)
CHANNEL_SIGN = {"w_growth": 1.0, "w_dep": -1.0, "w_pol": -1.0, "w_opec": -1.0, "w_geo": -1.0}

CORE_FIXABLE = ("alpha_p", "eps_s", "eps_d", "baseline_trend", "weights")


@dataclass
class CalibrationConfig:
    start: dt.date | None = None
    end: dt.date | None = None
    dt: float = 1.0
    min_window: float = 60.0
    base: OilParams = field(default_factory=OilParams)
    fixed: frozenset = frozenset()
    drivers: Mapping[str, Sequence[ScheduledChange]] = field(default_factory=dict)

    def __post_init__(self):
        unknown = set(self.fixed) - set(CORE_FIXABLE)
        if unknown:
            raise ValueError(f"cannot fix {sorted(unknown)}; choose from {CORE_FIXABLE}")
        self.fixed = frozenset(self.fixed)


@dataclass
class AlignedData:
    t0: dt.date
    times: np.ndarray
    price: np.ndarray
    supply: np.ndarray
    demand: np.ndarray
    growth: dict[str, np.ndarray]


def align(price: TimeSeries, supply: TimeSeries, demand: TimeSeries,
          growth: Mapping[str, TimeSeries], config: CalibrationConfig) -> AlignedData:
    everything = [price, supply, demand, *growth.values()]
    start, end = dataio.common_window(*everything)
    if config.start is not None:
        start = max(start, config.start)
    if config.end is not None:
        end = min(end, config.end)
    span = (end - start).days
    if span < config.min_window:
        raise InsufficientOverlap(
            f"common window {start}..{end} is {span} days, need {config.min_window}")
    horizon = math.floor(span / config.dt) * config.dt
    res = {s.name: dataio.resample(s, start, horizon, config.dt) for s in (price, supply, demand)}
    g = {name: dataio.resample(s, start, horizon, config.dt) for name, s in growth.items()}
    return AlignedData(start, dataio.grid(horizon, config.dt), res[price.name],
                       res[supply.name], res[demand.name], g)


def stage_price_gain(data: AlignedData, dt_days: float) -> FitReport:
    y = np.diff(np.log(data.price)) / dt_days
    gap = (data.demand / data.supply - 1.0)[:-1]
    return fit_ols(DesignMatrix.from_columns({"ratio_gap": gap}, "dlog_price", y))


def price_signal(price: np.ndarray, p_ref: float, tau: float, dt_days: float) -> np.ndarray:
    gap = np.log(price / p_ref)
    return smooth_series(gap, tau, dt_days, initial=gap[0])


def stage_elasticity(level: np.ndarray, signal: np.ndarray, dt_days: float,
                     name: str) -> FitReport:
    y = np.diff(np.log(level)) / dt_days
    return fit_ols(DesignMatrix.from_columns({"price_signal": signal[:-1]}, f"dlog_{name}", y))


def implied_log_expectation(data: AlignedData, alpha_p: float, dt_days: float) -> np.ndarray:
    """ln(ExD/ExS) that reproduces each observed price step under the model."""
    rel = (data.price[1:] / data.price[:-1] - 1.0) / dt_days
    ratio = (data.demand / data.supply)[:-1]
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.log1p(rel / alpha_p) - np.log(ratio)


def stage_expectation(data: AlignedData, alpha_p: float, config: CalibrationConfig
                      ) -> FitReport | None:
    channels = driver_channels(config.base, data.times, config.drivers, data.growth, config.dt)
    active = {k: v[:-1] for k, v in channels.items() if np.ptp(v[:-1]) > 0}
    if not active:
        return None
    y = implied_log_expectation(data, alpha_p, config.dt)
    return fit_ols(DesignMatrix.from_columns(active, "log_expectation_ratio", y))


def calibrate_core(price: TimeSeries, supply: TimeSeries, demand: TimeSeries,
                   growth: Mapping[str, TimeSeries] | None = None,
                   config: CalibrationConfig | None = None
                   ) -> tuple[OilParams, dict[str, FitReport]]:
    """Staged OLS calibration; returns fitted params and one report per stage."""
    config = config or CalibrationConfig()
    growth = dict(growth or {})
    for g in growth:
        if g not in ("growth_eus", "growth_ribc"):
            raise ValueError(f"unknown growth channel {g!r}")
    data = align(price, supply, demand, growth, config)
    base = config.base
    reports: dict[str, FitReport] = {}
    updates: dict = {}

    alpha = base.alpha_p
    if "alpha_p" not in config.fixed:
        rep = stage_price_gain(data, config.dt)
        reports["price"] = rep
        alpha = rep.coefficients["ratio_gap"]
        if not alpha > 0:
            raise CalibrationError(f"price gain estimate {alpha:g} is not positive")
        updates["alpha_p"] = alpha

    fit_s = "eps_s" not in config.fixed
    fit_d = "eps_d" not in config.fixed
    if fit_s or fit_d:
        p_ref = float(np.mean(data.price))
        sig = price_signal(data.price, p_ref, base.tau_price_smooth, config.dt)
        trends = dict(base.baseline_trend)
        for fit, name, series, sign, comps in (
                (fit_s, "supply", data.supply, 1.0, SUPPLY),
                (fit_d, "demand", data.demand, -1.0, DEMAND)):
            if not fit:
                continue
            rep = stage_elasticity(series, sig, config.dt, name)
            reports[name] = rep
            updates["eps_s" if sign > 0 else "eps_d"] = (
                sign * rep.coefficients["price_signal"] * base.tau_price_response)
            trend = rep.coefficients["intercept"] * DAYS_PER_YEAR
            for c in comps:
                trends[c] = trend
        updates["p_ref"] = p_ref
        if "baseline_trend" not in config.fixed:
            updates["baseline_trend"] = trends

    if "weights" not in config.fixed:
        rep = stage_expectation(data, alpha, config)
        if rep is not None:
            reports["expectations"] = rep
            for k, v in rep.coefficients.items():
                if k in CHANNEL_SIGN:
                    updates[k] = CHANNEL_SIGN[k] * v

    params = base.replace(**updates)
    for k in ("eps_s", "eps_d"):
        if k in updates and not updates[k] > 0:
            raise CalibrationError(f"{k} estimate {updates[k]:g} is not positive")
    return params, reports


def backtest(params: OilParams, scenario, observed: TimeSeries) -> BacktestMetrics:
    """Simulate ``scenario`` with ``params`` and score its price path."""
    traj = simulate_config(scenario, params=params)
    return score(traj.times, traj["price"], observed, scenario.t0)
