"""Scoring of a simulated price path against observations."""
from __future__ import annotations

import datetime as dt
from dataclasses import asdict, dataclass

import numpy as np

from .dataio import TimeSeries


class NoOverlap(ValueError):
    pass


@dataclass(frozen=True)
class BacktestMetrics:
    mape: float
    rmse: float
    directional_accuracy: float
    n_points: int

    def to_dict(self) -> dict:
        return asdict(self)


def compare(simulated, observed) -> BacktestMetrics:
    """Metrics for two aligned sequences; directions use first differences."""
    sim = np.asarray(simulated, dtype=float)
    obs = np.asarray(observed, dtype=float)
    if sim.shape != obs.shape or sim.ndim != 1:
        raise ValueError("simulated and observed must be 1-d and aligned")
    if len(obs) < 2:
        raise NoOverlap("need at least two overlapping observations")
    err = sim - obs
    mape = float(np.mean(np.abs(err) / np.abs(obs)) * 100.0)
    rmse = float(np.sqrt(np.mean(err ** 2)))
    agree = np.sign(np.diff(sim)) == np.sign(np.diff(obs))
    return BacktestMetrics(mape, rmse, float(np.mean(agree)), len(obs))


def sample_at(times: np.ndarray, values: np.ndarray, observed: TimeSeries,
              t0: dt.date) -> tuple[np.ndarray, np.ndarray]:
    """Simulated values at the observation dates that fall inside the run."""
    x = observed.offsets(t0)
    inside = (x >= times[0]) & (x <= times[-1])
    if inside.sum() < 2:
        raise NoOverlap(f"{observed.name}: fewer than two observations inside the run")
    return np.interp(x[inside], times, values), observed.values[inside]


def score(times: np.ndarray, price: np.ndarray, observed: TimeSeries,
          t0: dt.date) -> BacktestMetrics:
    sim, obs = sample_at(times, price, observed, t0)
    return compare(sim, obs)
