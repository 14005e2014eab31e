"""Stock-and-flow simulation core.

A model is a flat list of :class:`VariableDef` objects.  Each non-constant
variable carries a Python callable and the names of the variables it reads;
:func:`compile` turns the list into an evaluation plan (auxiliaries and flows
in dependency order, stocks integrated last) and the plan is advanced with
fixed-step explicit Euler.

Two pseudo-variables are always readable: ``time`` (days since the run
started) and ``dt`` (the current step length).
"""
from __future__ import annotations

import graphlib
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

STOCK = "stock"
FLOW = "flow"
AUXILIARY = "auxiliary"
CONSTANT = "constant"
KINDS = (STOCK, FLOW, AUXILIARY, CONSTANT)

TIME = "time"
DT = "dt"
RESERVED = (TIME, DT)


class ModelError(Exception):
    """Structural problem found while compiling a model."""


class UndefinedReference(ModelError):
    def __init__(self, name: str, referenced_by: str | None = None):
        self.name = name
        self.referenced_by = referenced_by
        where = f" (referenced by {referenced_by!r})" if referenced_by else ""
        super().__init__(f"undefined variable {name!r}{where}")


class DuplicateName(ModelError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"variable {name!r} defined more than once")


class AlgebraicLoop(ModelError):
    def __init__(self, members: Iterable[str]):
        self.members = tuple(sorted(set(members)))
        super().__init__(
            "algebraic loop without a stock: " + ", ".join(self.members))


class InvalidEvent(ModelError):
    pass


class SimulationError(Exception):
    pass


class NonFiniteValue(SimulationError):
    def __init__(self, name: str, t: float, detail: str = ""):
        self.name = name
        self.t = t
        msg = f"non-finite value for {name!r} at t={t:g}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class EvaluationError(SimulationError):
    """An equation raised (domain error, division by zero, bad argument)."""

    def __init__(self, name: str, t: float, detail: str):
        self.name = name
        self.t = t
        super().__init__(f"evaluating {name!r} at t={t:g} failed: {detail}")


class NonPositiveTau(ValueError):
    pass


@dataclass(frozen=True)
class VariableDef:
    """One named model variable.

    For stocks ``equation`` returns the net flow and ``initial_value`` is the
    level at t=0.  Constants carry their value in ``initial_value`` and have
    no equation.
    """

    name: str
    kind: str
    equation: Callable[..., float] | None = None
    inputs: tuple[str, ...] = ()
    initial_value: float | None = None
    unit: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ModelError(f"{self.name}: unknown kind {self.kind!r}")
        if self.name in RESERVED:
            raise ModelError(f"{self.name!r} is a reserved name")
        if self.kind == CONSTANT:
            if self.inputs or self.equation is not None:
                raise ModelError(f"constant {self.name!r} cannot have dependencies")
            if self.initial_value is None:
                raise ModelError(f"constant {self.name!r} needs a value")
        else:
            if self.equation is None:
                raise ModelError(f"{self.kind} {self.name!r} needs an equation")
        if self.kind == STOCK and self.initial_value is None:
            raise ModelError(f"stock {self.name!r} needs an initial value")


def constant(name: str, value: float, unit: str = "") -> VariableDef:
    return VariableDef(name, CONSTANT, initial_value=float(value), unit=unit)


def auxiliary(name: str, equation: Callable[..., float], inputs: Sequence[str] = (),
              unit: str = "") -> VariableDef:
    return VariableDef(name, AUXILIARY, equation, tuple(inputs), unit=unit)


def flow(name: str, equation: Callable[..., float], inputs: Sequence[str] = (),
         unit: str = "") -> VariableDef:
    return VariableDef(name, FLOW, equation, tuple(inputs), unit=unit)


def stock(name: str, initial: float, inflows: Sequence[str] = (),
          outflows: Sequence[str] = (), unit: str = "") -> VariableDef:
    """Stock whose net flow is ``sum(inflows) - sum(outflows)``."""
    n_in = len(inflows)

    def net(*rates):
        return math.fsum(rates[:n_in]) - math.fsum(rates[n_in:])

    return VariableDef(name, STOCK, net, tuple(inflows) + tuple(outflows),
                       initial_value=float(initial), unit=unit)


@dataclass
class ModelSpec:
    variables: list[VariableDef] = field(default_factory=list)
    dt: float = 1.0
    time_unit: str = "days"

    def add(self, *defs: VariableDef) -> "ModelSpec":
        self.variables.extend(defs)
        return self

    def names(self) -> list[str]:
        return [v.name for v in self.variables]


@dataclass
class SimState:
    t: float
    values: dict[str, float]

    def __getitem__(self, name: str) -> float:
        return self.values[name]


@dataclass(frozen=True)
class Event:
    """Overwrite constant ``target`` with ``value`` from ``time`` onwards."""

    time: float
    target: str
    value: float


# -- builtins ---------------------------------------------------------------

def pulse(start: float, duration: float, t: float) -> float:
    """Unit pulse on the half-open interval [start, start + duration)."""
    if duration < 0:
        raise ValueError("pulse duration must be >= 0")
    return 1.0 if start <= t < start + duration else 0.0


def step_signal(height: float, start: float, t: float) -> float:
    return height if t >= start else 0.0


def smooth(input: float, state: float, tau: float, dt: float) -> float:
    """One explicit step of first-order exponential smoothing."""
    if tau <= 0:
        raise NonPositiveTau(f"smoothing time constant must be > 0, got {tau}")
    if dt <= 0:
        raise ValueError("dt must be > 0")
    return state + dt * (input - state) / tau


def smoothed_derivative(series_current: float, series_prev: float, dt: float,
                        deriv_state: float, tau: float) -> float:
    if dt <= 0:
        raise ValueError("dt must be > 0")
    rate = (series_current - series_prev) / dt
    return smooth(rate, deriv_state, tau, dt)


def _tau_getter(tau):
    # tau may be a literal or the name of a constant
    if isinstance(tau, str):
        return (tau,), None
    if tau <= 0:
        raise NonPositiveTau(f"smoothing time constant must be > 0, got {tau}")
    return (), float(tau)


def add_smooth(spec: ModelSpec, name: str, input_name: str, tau: float | str,
               initial: float, unit: str = "") -> str:
    """Append a SMOOTH stock tracking ``input_name``; returns the stock name."""
    tau_inputs, tau_value = _tau_getter(tau)
    rate_name = f"{name}__rate"

    if tau_value is None:
        def rate(x, s, tau_):
            if tau_ <= 0:
                raise NonPositiveTau(f"{name}: tau must be > 0")
            return (x - s) / tau_
    else:
        def rate(x, s):
            return (x - s) / tau_value

    spec.add(
        flow(rate_name, rate, (input_name, name) + tau_inputs),
        stock(name, initial, inflows=(rate_name,), unit=unit),
    )
    return name


def add_smoothed_derivative(spec: ModelSpec, name: str, input_name: str,
                            tau: float | str, initial_input: float,
                            unit: str = "") -> str:
    """Append stocks computing the smoothed time derivative of ``input_name``.

    A one-step memory stock ``<name>__prev`` holds the input value from the
    previous step, so the raw rate is a backward difference.
    """
    prev = f"{name}__prev"
    prev_flow = f"{name}__prev_in"
    raw = f"{name}__raw"
    spec.add(
        flow(prev_flow, lambda x, p, dt: (x - p) / dt, (input_name, prev, DT)),
        stock(prev, initial_input, inflows=(prev_flow,)),
        auxiliary(raw, lambda x, p, dt: (x - p) / dt, (input_name, prev, DT)),
    )
    add_smooth(spec, name, raw, tau, 0.0, unit=unit)
    return name


# -- compile ----------------------------------------------------------------

class CompiledModel:
    """Immutable evaluation plan for a :class:`ModelSpec`."""

    def __init__(self, spec: ModelSpec):
        self.dt = float(spec.dt)
        self.time_unit = spec.time_unit
        defs = list(spec.variables)
        self.names: tuple[str, ...] = tuple(v.name for v in defs)
        self.defs: dict[str, VariableDef] = {v.name: v for v in defs}
        self.index: dict[str, int] = {n: i for i, n in enumerate(self.names)}
        n = len(self.names)
        slots = dict(self.index)
        slots[TIME] = n
        slots[DT] = n + 1

        computed = [v for v in defs if v.kind in (FLOW, AUXILIARY)]
        graph = graphlib.TopologicalSorter()
        for v in computed:
            deps = [d for d in v.inputs
                    if d not in RESERVED and self.defs[d].kind in (FLOW, AUXILIARY)]
            graph.add(v.name, *deps)
        try:
            order = list(graph.static_order())
        except graphlib.CycleError as exc:
            raise AlgebraicLoop(exc.args[1]) from None
        self.order: tuple[str, ...] = tuple(order)
        self.stocks: tuple[str, ...] = tuple(v.name for v in defs if v.kind == STOCK)
        self.constants: tuple[str, ...] = tuple(v.name for v in defs if v.kind == CONSTANT)
        # constants first, then computed variables, then stock updates
        self.evaluation_order: tuple[str, ...] = self.constants + self.order + self.stocks

        self._plan = tuple(
            (self.index[name], name, self.defs[name].equation,
             tuple(slots[d] for d in self.defs[name].inputs))
            for name in self.order)
        self._stock_plan = tuple(
            (self.index[name], name, self.defs[name].equation,
             tuple(slots[d] for d in self.defs[name].inputs))
            for name in self.stocks)

    def __repr__(self):
        return (f"CompiledModel({len(self.stocks)} stocks, {len(self.order)} "
                f"flows/auxiliaries, {len(self.constants)} constants)")

    # internal buffers hold every variable plus the time and dt slots
    def _buffer(self, values: Mapping[str, float], t: float, dt: float) -> list[float]:
        buf = [float(values[n]) for n in self.names]
        buf.append(float(t))
        buf.append(float(dt))
        return buf

    def _evaluate(self, buf: list[float]) -> None:
        t = buf[-2]
        for idx, name, fn, args in self._plan:
            try:
                val = fn(*[buf[j] for j in args])
            except (ArithmeticError, ValueError) as exc:
                raise EvaluationError(name, t, f"{type(exc).__name__}: {exc}") from exc
            if not math.isfinite(val):
                raise NonFiniteValue(name, t)
            buf[idx] = val

    def _net_flows(self, buf: list[float]) -> list[float]:
        t = buf[-2]
        out = []
        for idx, name, fn, args in self._stock_plan:
            val = fn(*[buf[j] for j in args])
            if not math.isfinite(val):
                raise NonFiniteValue(name, t, "net flow")
            out.append(val)
        return out

    def _euler(self, buf: list[float], dt: float) -> None:
        rates = self._net_flows(buf)
        t = buf[-2]
        for (idx, name, _, _), r in zip(self._stock_plan, rates):
            new = buf[idx] + dt * r
            if not math.isfinite(new):
                raise NonFiniteValue(name, t + dt)
            buf[idx] = new

    def initial_state(self, overrides: Mapping[str, float] | None = None,
                      t: float = 0.0) -> SimState:
        """State at ``t`` from declared initial values, with auxiliaries evaluated."""
        values = {n: (d.initial_value if d.initial_value is not None else 0.0)
                  for n, d in self.defs.items()}
        for k, v in (overrides or {}).items():
            if k not in self.defs:
                raise UndefinedReference(k)
            if self.defs[k].kind not in (STOCK, CONSTANT):
                raise ModelError(f"cannot override computed variable {k!r}")
            values[k] = float(v)
        buf = self._buffer(values, t, self.dt)
        self._evaluate(buf)
        return SimState(t, dict(zip(self.names, buf)))

    def evaluate(self, state: SimState, dt: float | None = None) -> SimState:
        """Recompute auxiliaries and flows from the stocks and constants of ``state``."""
        self._check_state(state)
        buf = self._buffer(state.values, state.t, self.dt if dt is None else dt)
        self._evaluate(buf)
        return SimState(state.t, dict(zip(self.names, buf)))

    def net_flows(self, state: SimState) -> dict[str, float]:
        buf = self._buffer(state.values, state.t, self.dt)
        self._evaluate(buf)
        return dict(zip(self.stocks, self._net_flows(buf)))

    def _check_state(self, state: SimState) -> None:
        if set(state.values) != set(self.names):
            missing = set(self.names) - set(state.values)
            extra = set(state.values) - set(self.names)
            raise ModelError(f"state does not match model (missing={sorted(missing)}, "
                             f"extra={sorted(extra)})")


def compile(spec: ModelSpec) -> CompiledModel:
    if not spec.variables:
        raise ModelError("empty model")
    seen = set()
    for v in spec.variables:
        if v.name in seen:
            raise DuplicateName(v.name)
        seen.add(v.name)
    for v in spec.variables:
        for d in v.inputs:
            if d not in seen and d not in RESERVED:
                raise UndefinedReference(d, v.name)
    if spec.dt <= 0:
        raise ModelError("dt must be > 0")
    return CompiledModel(spec)


# -- integration ------------------------------------------------------------

def step(model: CompiledModel, state: SimState, dt: float) -> SimState:
    """Advance one explicit Euler step; auxiliaries of the result are current."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    model._check_state(state)
    buf = model._buffer(state.values, state.t, dt)
    model._evaluate(buf)
    model._euler(buf, dt)
    buf[-2] = state.t + dt
    model._evaluate(buf)
    return SimState(state.t + dt, dict(zip(model.names, buf)))


def rk4_step(model: CompiledModel, state: SimState, dt: float) -> SimState:
    """Classical RK4 step, kept as a reference integrator for accuracy tests."""
    model._check_state(state)
    base = model._buffer(state.values, state.t, dt)
    sidx = [p[0] for p in model._stock_plan]

    def derivs(offsets, frac):
        buf = list(base)
        buf[-2] = state.t + frac * dt
        for i, o in zip(sidx, offsets):
            buf[i] = base[i] + o
        model._evaluate(buf)
        return model._net_flows(buf)

    zero = [0.0] * len(sidx)
    k1 = derivs(zero, 0.0)
    k2 = derivs([dt / 2 * k for k in k1], 0.5)
    k3 = derivs([dt / 2 * k for k in k2], 0.5)
    k4 = derivs([dt * k for k in k3], 1.0)
    buf = list(base)
    for j, i in enumerate(sidx):
        buf[i] = base[i] + dt / 6 * (k1[j] + 2 * k2[j] + 2 * k3[j] + k4[j])
    buf[-2] = state.t + dt
    model._evaluate(buf)
    return SimState(state.t + dt, dict(zip(model.names, buf)))


class Trajectory:
    """Recorded run: ``times`` (n,) and ``data`` (n, n_vars) in model name order."""

    def __init__(self, times: np.ndarray, names: Sequence[str], data: np.ndarray):
        self.times = times
        self.names = tuple(names)
        self.data = data
        self._col = {n: i for i, n in enumerate(self.names)}

    def __len__(self):
        return len(self.times)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.data[:, self._col[name]]

    def __contains__(self, name: str) -> bool:
        return name in self._col

    def row(self, i: int) -> SimState:
        return SimState(float(self.times[i]), dict(zip(self.names, self.data[i].tolist())))

    @property
    def rows(self) -> list[dict[str, float]]:
        return [dict(zip(self.names, r)) for r in self.data.tolist()]

    def at(self, t: float) -> SimState:
        i = int(np.argmin(np.abs(self.times - t)))
        return self.row(i)


def _snap(time: float, dt: float) -> int:
    # nearest grid index, ties toward the earlier point
    return max(0, math.ceil(time / dt - 0.5 - 1e-12))


def simulate(model: CompiledModel, init: SimState | None = None, horizon: float = 0.0,
             events: Sequence[Event] = (), dt: float | None = None) -> Trajectory:
    dt = model.dt if dt is None else float(dt)
    if dt <= 0:
        raise ValueError("dt must be > 0")
    if horizon < dt:
        raise ValueError(f"horizon {horizon} shorter than dt {dt}")
    if init is None:
        init = model.initial_state()
    model._check_state(init)
    n_steps = int(round(horizon / dt))

    pending: dict[int, list[tuple[int, float]]] = {}
    for ev in events:
        if ev.target not in model.defs:
            raise InvalidEvent(f"event targets unknown variable {ev.target!r}")
        if model.defs[ev.target].kind != CONSTANT:
            raise InvalidEvent(f"event target {ev.target!r} is not a constant")
        if not (0 <= ev.time <= horizon) or not math.isfinite(ev.value):
            raise InvalidEvent(f"event on {ev.target!r} at t={ev.time} outside [0, {horizon}]")
        pending.setdefault(_snap(ev.time, dt), []).append((model.index[ev.target], ev.value))

    t0 = init.t
    buf = model._buffer(init.values, t0, dt)
    data = np.empty((n_steps + 1, len(model.names)))
    times = t0 + dt * np.arange(n_steps + 1)
    n = len(model.names)
    for k in range(n_steps + 1):
        buf[-2] = t0 + k * dt
        for idx, value in pending.get(k, ()):
            buf[idx] = value
        model._evaluate(buf)
        data[k] = buf[:n]
        if k < n_steps:
            model._euler(buf, dt)
    return Trajectory(times, model.names, data)
