"""Model-generated data sets for generate-then-fit checks."""
from __future__ import annotations

import datetime as dt

import numpy as np

from petrosim import dataio, engine, oil

# admissible box for the closure draws
BOX = {"alpha_p": (0.05, 0.3), "eps_s": (0.05, 0.3), "eps_d": (0.05, 0.3)}
TREND_RANGE = (-0.02, 0.02)
IMBALANCE_RANGE = (0.01, 0.03)
NOISE = 1e-5
HORIZON = 365
T0 = dt.date(2000, 1, 1)
RESPONSE = {"tau_price_response": 365.0, "tau_price_smooth": 30.0}


def draw_truth(rng: np.random.Generator) -> dict[str, float]:
    return {k: float(rng.uniform(*b)) for k, b in BOX.items()}


def generate(rng: np.random.Generator, truth: dict[str, float], noise: float = NOISE,
             horizon: int = HORIZON):
    """Simulate one window with common block trends and an initial imbalance.

    Returns price, supply and demand as daily TimeSeries with multiplicative
    lognormal noise of relative size ``noise``.
    """
    ts, td = rng.uniform(*TREND_RANGE), rng.uniform(*TREND_RANGE)
    trend = {c: ts for c in oil.SUPPLY} | {c: td for c in oil.DEMAND}
    params = oil.OilParams(**truth, baseline_trend=trend, **RESPONSE)
    imb = rng.uniform(*IMBALANCE_RANGE) * rng.choice([-1.0, 1.0])
    s = np.array([30.0, 9.0, 40.0, 0.6, 2.0])
    d = np.array([45.0, 20.0, 16.6])
    d = d * (s.sum() * (1.0 + imb) / d.sum())
    init = oil.InitialConditions(oil.SupplyComponents(*s), oil.DemandComponents(*d), 100.0)
    traj = engine.simulate(engine.compile(oil.build_oil_model(params, init)), None, horizon)
    dates = tuple(T0 + dt.timedelta(days=int(t)) for t in traj.times)

    def series(name, col, unit):
        v = traj[col] * np.exp(noise * rng.standard_normal(len(dates)))
        return dataio.TimeSeries(name, unit, dates, v)

    return (series("price", "price", "USD/bbl"), series("supply", "actual_supply", "mb/d"),
            series("demand", "actual_demand", "mb/d"))
