"""Expectation-driven oil market model.

Five supply blocks and three demand blocks are stocks in mb/d.  Their sums
are scaled by the expectation coefficients ExS and ExD to give the expected
totals TOS and TOD, and the price stock moves with the expected
demand/supply ratio.  Dividing an expected total by its coefficient gives the
actual total, which is carried as a diagnostic.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields
from typing import Mapping, Sequence

from . import engine
from .engine import ModelSpec, auxiliary, constant, flow, stock

SUPPLY = ("s_opec", "s_us", "s_other", "s_smuggled", "s_spare")
DEMAND = ("d_eus", "d_ribc", "d_other")
COMPONENTS = SUPPLY + DEMAND
DRIVERS = ("opec_decision", "geopolitical_upset", "econ_depression",
           "policy_effect", "growth_eus", "growth_ribc")

TRAJECTORY_COLUMNS = (
    ("t", "price", "TOS", "TOD", "ExS", "ExD")
    + COMPONENTS
    + ("actual_supply", "actual_demand")
)

DAYS_PER_YEAR = 365.0


class NegativeComponent(ValueError):
    def __init__(self, name: str, value: float):
        self.name = name
        super().__init__(f"component {name} is negative ({value})")


class NonPositiveExpectation(ValueError):
    pass


class NonPositiveSupply(ValueError):
    pass


class NonPositivePrice(ValueError):
    pass


class InvalidParams(ValueError):
    pass


@dataclass(frozen=True)
class SupplyComponents:
    s_opec: float
    s_us: float
    s_other: float
    s_smuggled: float
    s_spare: float

    def as_dict(self) -> dict[str, float]:
        return asdict(self)


@dataclass(frozen=True)
class DemandComponents:
    d_eus: float
    d_ribc: float
    d_other: float

    def as_dict(self) -> dict[str, float]:
        return asdict(self)


@dataclass(frozen=True)
class DriverSet:
    opec_decision: float = 0.0
    geopolitical_upset: float = 0.0
    econ_depression: float = 0.0
    policy_effect: float = 0.0
    growth_eus: float = 0.0
    growth_ribc: float = 0.0

    def __post_init__(self):
        if self.econ_depression not in (0.0, 1.0):
            raise ValueError("econ_depression must be 0 or 1")


def _zero_trends() -> dict[str, float]:
    return {c: 0.0 for c in COMPONENTS}


@dataclass
class OilParams:
    """Free coefficients of the model.

    Time constants are in days; trends are fractions per year; weights are
    dimensionless log-weights of the expectation coefficients.
    """

    alpha_p: float = 0.1
    eps_s: float = 0.05
    eps_d: float = 0.05
    tau_exp_s: float = 30.0
    tau_exp_d: float = 30.0
    tau_policy_fast: float = 30.0
    tau_policy_slow: float = 730.0
    tau_price_smooth: float = 30.0
    tau_price_response: float = 365.0
    w_growth: float = 1.0
    w_dep: float = 0.05
    w_pol: float = 0.05
    w_geo: float = 0.05
    w_opec: float = 0.05
    baseline_trend: dict[str, float] = field(default_factory=_zero_trends)
    p0: float = 100.0
    p_ref: float | None = None
    # structural couplings of the smuggled/spare blocks and component shocks
    tau_shock: float = 30.0
    tau_smuggled: float = 90.0
    k_geo_opec: float = 0.0
    k_geo_smuggled: float = 0.0
    k_opec_spare: float = 0.0
    k_policy: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, (int, float)) and not isinstance(v, bool):
                setattr(self, f.name, float(v))
        trends = _zero_trends()
        for k, v in dict(self.baseline_trend).items():
            if k not in trends:
                raise InvalidParams(f"unknown component in baseline_trend: {k!r}")
            trends[k] = float(v)
        self.baseline_trend = trends

    def validate(self) -> "OilParams":
        if not self.alpha_p > 0:
            raise InvalidParams("alpha_p must be > 0")
        if not (self.eps_s > 0 and self.eps_d > 0):
            raise InvalidParams("eps_s and eps_d must be > 0")
        for name in ("tau_exp_s", "tau_exp_d", "tau_policy_fast", "tau_policy_slow",
                     "tau_price_smooth", "tau_price_response", "tau_shock", "tau_smuggled"):
            if not getattr(self, name) > 0:
                raise InvalidParams(f"{name} must be > 0")
        if not self.tau_policy_fast < self.tau_policy_slow:
            raise InvalidParams("tau_policy_fast must be < tau_policy_slow")
        if not (self.p0 > 0 and (self.p_ref is None or self.p_ref > 0)):
            raise InvalidParams("p0 and p_ref must be > 0")
        for name, v in asdict(self).items():
            if isinstance(v, float) and not math.isfinite(v):
                raise InvalidParams(f"{name} is not finite")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping) -> "OilParams":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InvalidParams(f"unknown parameter(s): {', '.join(sorted(unknown))}")
        return cls(**dict(data))

    def replace(self, **changes) -> "OilParams":
        d = self.to_dict()
        d.update(changes)
        return OilParams.from_dict(d)


@dataclass(frozen=True)
class ScheduledChange:
    """Additive change to a driver or component shock: a step or a pulse."""

    kind: str
    time: float
    value: float
    duration: float = 0.0

    def __post_init__(self):
        if self.kind not in ("step", "pulse"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.duration < 0:
            raise ValueError("duration must be >= 0")

    def at(self, t: float) -> float:
        if self.kind == "step":
            return engine.step_signal(self.value, self.time, t)
        return self.value * engine.pulse(self.time, self.duration, t)


def schedule_value(changes: Sequence[ScheduledChange], t: float) -> float:
    return math.fsum(c.at(t) for c in changes)


# -- pure operations ----------------------------------------------------------

def _check_components(values: Mapping[str, float]) -> None:
    for name, v in values.items():
        if not math.isfinite(v):
            raise ValueError(f"component {name} is not finite")
        if v < 0:
            raise NegativeComponent(name, v)


def total_expected_supply(c: SupplyComponents | Mapping[str, float]) -> float:
    values = c.as_dict() if isinstance(c, SupplyComponents) else dict(c)
    _check_components(values)
    return math.fsum(values[k] for k in SUPPLY)


def total_expected_demand(c: DemandComponents | Mapping[str, float]) -> float:
    values = c.as_dict() if isinstance(c, DemandComponents) else dict(c)
    _check_components(values)
    return math.fsum(values[k] for k in DEMAND)


def actual_supply(tos: float, exs: float) -> float:
    if not exs > 0:
        raise NonPositiveExpectation(f"ExS must be > 0, got {exs}")
    return tos / exs


def actual_demand(tod: float, exd: float) -> float:
    if not exd > 0:
        raise NonPositiveExpectation(f"ExD must be > 0, got {exd}")
    return tod / exd


def supply_coefficient(opec_smoothed: float, geo_smoothed: float,
                       w_opec: float, w_geo: float) -> float:
    return math.exp(w_opec * opec_smoothed + w_geo * geo_smoothed)


def demand_coefficient(growth_momentum: float, econ_depression: float,
                       policy_smoothed: float, w_growth: float, w_dep: float,
                       w_pol: float) -> float:
    return math.exp(w_growth * growth_momentum - w_dep * econ_depression
                    - w_pol * policy_smoothed)


def expectation_supply(drivers: DriverSet, smoothed_states: Mapping[str, float],
                       params: OilParams, dt: float) -> tuple[float, dict[str, float]]:
    """Advance the supply-side smoothing memories one step and return ExS.

    ``smoothed_states`` holds ``opec_decision`` and ``geopolitical_upset``.
    Returns ``(ExS, new_states)``.
    """
    tau = params.tau_exp_s
    new = {
        "opec_decision": engine.smooth(drivers.opec_decision,
                                       smoothed_states.get("opec_decision", 0.0), tau, dt),
        "geopolitical_upset": engine.smooth(drivers.geopolitical_upset,
                                            smoothed_states.get("geopolitical_upset", 0.0),
                                            tau, dt),
    }
    exs = supply_coefficient(new["opec_decision"], new["geopolitical_upset"],
                             params.w_opec, params.w_geo)
    return exs, new


def expectation_demand(drivers: DriverSet, smoothed_states: Mapping[str, float],
                       params: OilParams, dt: float) -> tuple[float, dict[str, float]]:
    """Advance the demand-side memories one step and return ExD.

    Memories: ``growth_eus_prev``/``growth_ribc_prev`` (last raw growth
    values), ``growth_eus``/``growth_ribc`` (smoothed derivatives, per day)
    and ``policy_fast``.  The growth momentum entering ExD is the sum of the
    smoothed derivatives expressed per year.
    """
    s = dict(smoothed_states)
    new = {}
    for g in ("growth_eus", "growth_ribc"):
        cur = getattr(drivers, g)
        prev = s.get(f"{g}_prev", cur)
        new[g] = engine.smoothed_derivative(cur, prev, dt, s.get(g, 0.0), params.tau_exp_d)
        new[f"{g}_prev"] = cur
    new["policy_fast"] = engine.smooth(drivers.policy_effect, s.get("policy_fast", 0.0),
                                       params.tau_policy_fast, dt)
    momentum = DAYS_PER_YEAR * (new["growth_eus"] + new["growth_ribc"])
    exd = demand_coefficient(momentum, drivers.econ_depression, new["policy_fast"],
                             params.w_growth, params.w_dep, params.w_pol)
    return exd, new


def price_rate(p: float, tod: float, tos: float, alpha_p: float) -> float:
    """dP/dt = alpha_p * P * (TOD/TOS - 1)."""
    if not tos > 0:
        raise NonPositiveSupply(f"TOS must be > 0, got {tos}")
    if not p > 0:
        raise NonPositivePrice(f"price must be > 0, got {p}")
    return alpha_p * p * (tod / tos - 1.0)


def component_rate(level: float, price_signal: float, trend: float,
                   elasticity: float, tau_response: float) -> float:
    return level * (trend / DAYS_PER_YEAR + elasticity * price_signal / tau_response)


def component_flow(level: float, price: float, p_ref: float, trend: float,
                   elasticity: float, delay_state: float, tau: float,
                   dt: float = 1.0, tau_response: float = 365.0) -> tuple[float, float]:
    """Autonomous-growth plus price-response flow of one supply/demand block.

    The block reacts to the smoothed log price gap held in ``delay_state``;
    the current price only enters that memory for the next step.  Returns
    ``(flow in mb/d per day, next delay_state)``.
    """
    if level < 0:
        raise NegativeComponent("level", level)
    if not (price > 0 and p_ref > 0):
        raise NonPositivePrice("price and p_ref must be > 0")
    rate = component_rate(level, delay_state, trend, elasticity, tau_response)
    return rate, engine.smooth(math.log(price / p_ref), delay_state, tau, dt)


# -- model assembly -----------------------------------------------------------

@dataclass(frozen=True)
class InitialConditions:
    supply: SupplyComponents
    demand: DemandComponents
    p0: float

    def __post_init__(self):
        _check_components(self.supply.as_dict())
        _check_components(self.demand.as_dict())
        if not self.p0 > 0:
            raise NonPositivePrice("p0 must be > 0")


def _schedule_aux(name: str, level_const: str, changes: Sequence[ScheduledChange],
                  extra: Sequence[tuple[str, float]] = (), cap: float | None = None):
    changes = tuple(changes)
    extra_names = tuple(n for n, _ in extra)
    extra_w = tuple(w for _, w in extra)

    def value(level, t, *xs):
        v = level + schedule_value(changes, t)
        for w, x in zip(extra_w, xs):
            v += w * x
        if cap is not None:
            v = min(v, cap)
        return v

    return auxiliary(name, value, (level_const, engine.TIME) + extra_names)


def build_oil_model(params: OilParams, init: InitialConditions,
                    schedules: Mapping[str, Sequence[ScheduledChange]] | None = None,
                    dt: float = 1.0, expectations: bool = True) -> ModelSpec:
    """Wire the full stock-and-flow model.

    ``schedules`` maps driver names (see ``DRIVERS``) and component names to
    additive step/pulse changes.  A component schedule is a shock in mb/d that
    the block absorbs through a first-order delay of ``tau_shock`` days.  With
    ``expectations=False`` ExS and ExD are pinned at 1.
    """
    params.validate()
    schedules = dict(schedules or {})
    for target in schedules:
        if target not in DRIVERS and target not in COMPONENTS:
            raise ValueError(f"unknown schedule target {target!r}")

    spec = ModelSpec(dt=dt)
    p_ref = init.p0 if params.p_ref is None else params.p_ref
    scalar = {k: v for k, v in params.to_dict().items()
              if isinstance(v, float) and k not in ("p0", "p_ref")}
    for k, v in scalar.items():
        spec.add(constant(k, v))
    spec.add(constant("p_ref", p_ref, "USD/bbl"))
    for c in COMPONENTS:
        spec.add(constant(f"trend_{c}", params.baseline_trend[c], "1/year"))

    # drivers
    for d in DRIVERS:
        spec.add(constant(f"{d}_level", 0.0))
        spec.add(_schedule_aux(d, f"{d}_level", schedules.get(d, ()),
                               cap=1.0 if d == "econ_depression" else None))

    # expectation memories
    engine.add_smooth(spec, "opec_smoothed", "opec_decision", "tau_exp_s", 0.0)
    engine.add_smooth(spec, "geo_smoothed", "geopolitical_upset", "tau_exp_s", 0.0)
    engine.add_smooth(spec, "policy_fast", "policy_effect", "tau_policy_fast", 0.0)
    engine.add_smooth(spec, "policy_slow", "policy_effect", "tau_policy_slow", 0.0)
    g0 = {g: schedule_value(schedules.get(g, ()), 0.0) for g in ("growth_eus", "growth_ribc")}
    for g in ("growth_eus", "growth_ribc"):
        engine.add_smoothed_derivative(spec, f"{g}_deriv", g, "tau_exp_d", g0[g])
    spec.add(auxiliary("growth_momentum",
                       lambda a, b: DAYS_PER_YEAR * (a + b),
                       ("growth_eus_deriv", "growth_ribc_deriv")))

    if expectations:
        spec.add(
            auxiliary("ExS", supply_coefficient,
                      ("opec_smoothed", "geo_smoothed", "w_opec", "w_geo")),
            auxiliary("ExD", demand_coefficient,
                      ("growth_momentum", "econ_depression", "policy_fast",
                       "w_growth", "w_dep", "w_pol")),
        )
    else:
        spec.add(auxiliary("ExS", lambda: 1.0), auxiliary("ExD", lambda: 1.0))

    # price signal seen by the blocks
    spec.add(auxiliary("log_price_gap", lambda p, r: math.log(p / r), ("price", "p_ref")))
    engine.add_smooth(spec, "price_signal", "log_price_gap", "tau_price_smooth", 0.0)

    # component shocks (sanctions, outages, couplings to drivers)
    couplings: dict[str, list[tuple[str, str]]] = {
        "s_opec": [("geopolitical_upset", "k_geo_opec")],
        "s_smuggled": [("geopolitical_upset", "k_geo_smuggled")],
        "s_spare": [("opec_decision", "k_opec_spare")],
    }
    for c in COMPONENTS:
        changes = tuple(schedules.get(c, ()))
        links = couplings.get(c, [])
        signs = {"k_geo_opec": -1.0}
        drv = tuple(d for d, _ in links)
        ks = tuple(k for _, k in links)
        ksign = tuple(signs.get(k, 1.0) for k in ks)

        def target(t, *args, _changes=changes, _n=len(drv), _sign=ksign):
            v = schedule_value(_changes, t)
            for s, x, k in zip(_sign, args[:_n], args[_n:]):
                v += s * k * x
            return v

        spec.add(auxiliary(f"shock_target_{c}", target, (engine.TIME,) + drv + ks))
        tau = "tau_smuggled" if c == "s_smuggled" else "tau_shock"
        engine.add_smooth(spec, f"shock_{c}", f"shock_target_{c}", tau, 0.0)

    # block growth flows and stocks
    levels = {**init.supply.as_dict(), **init.demand.as_dict()}
    for c in COMPONENTS:
        if c in SUPPLY:
            spec.add(flow(f"{c}_change",
                          lambda lv, sig, tr, e, tr_: component_rate(lv, sig, tr, e, tr_),
                          (c, "price_signal", f"trend_{c}", "eps_s", "tau_price_response")))
        elif c == "d_eus":
            spec.add(flow(
                f"{c}_change",
                lambda lv, sig, tr, e, tr_, pol, kp: (
                    component_rate(lv, sig, tr, -e, tr_) - lv * kp * pol / DAYS_PER_YEAR),
                (c, "price_signal", f"trend_{c}", "eps_d", "tau_price_response",
                 "policy_slow", "k_policy")))
        else:
            spec.add(flow(f"{c}_change",
                          lambda lv, sig, tr, e, tr_: component_rate(lv, sig, tr, -e, tr_),
                          (c, "price_signal", f"trend_{c}", "eps_d", "tau_price_response")))
        spec.add(stock(c, levels[c], inflows=(f"{c}_change", f"shock_{c}__rate"),
                       unit="mb/d"))

    # aggregation, expectations, price
    spec.add(
        auxiliary("supply_base", lambda *xs: total_expected_supply(dict(zip(SUPPLY, xs))),
                  SUPPLY, "mb/d"),
        auxiliary("demand_base", lambda *xs: total_expected_demand(dict(zip(DEMAND, xs))),
                  DEMAND, "mb/d"),
        auxiliary("TOS", lambda b, e: b * e, ("supply_base", "ExS"), "mb/d"),
        auxiliary("TOD", lambda b, e: b * e, ("demand_base", "ExD"), "mb/d"),
        auxiliary("actual_supply", actual_supply, ("TOS", "ExS"), "mb/d"),
        auxiliary("actual_demand", actual_demand, ("TOD", "ExD"), "mb/d"),
        flow("price_change", price_rate, ("price", "TOD", "TOS", "alpha_p"), "USD/bbl/day"),
        stock("price", init.p0, inflows=("price_change",), unit="USD/bbl"),
    )
    return spec


def default_initial() -> InitialConditions:
    """Balanced book at 81.6 mb/d, p0 = 100."""
    return InitialConditions(
        SupplyComponents(30.0, 9.0, 40.0, 0.6, 2.0),
        DemandComponents(45.0, 20.0, 16.6),
        100.0,
    )
