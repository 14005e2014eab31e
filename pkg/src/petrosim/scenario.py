"""Scenario configuration files and the run/forecast drivers behind the CLI.

A scenario is one JSON object::

    {
      "name": "scenario_b_depression",
      "t0": "2008-05-30",
      "horizon": 365,
      "dt": 1.0,
      "params_file": "../params/params_2008.json",     # or "params": {...}
      "initial": {"p0": 133.0,
                  "supply": {"s_opec": ..., ...},
                  "demand": {"d_eus": ..., ...}},
      "events": [{"time": 0, "kind": "pulse", "target": "econ_depression",
                  "value": 1.0, "duration": 210}],
      "observed": "../series/wti_monthly_2008_2009.csv",
      "variants": [{"name": "baseline", "events": []}],
      "description": "free text"
    }

Relative paths resolve against the directory holding the config file.
"""
from __future__ import annotations

import datetime
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

from . import dataio, engine, metrics
from .engine import Trajectory
from .oil import (COMPONENTS, DEMAND, DRIVERS, SUPPLY, TRAJECTORY_COLUMNS,
                  DemandComponents, InitialConditions, OilParams,
                  ScheduledChange, SupplyComponents, build_oil_model)

FORECAST_HORIZON = 60.0
PARAMS_FORMAT = "petrosim-params/1"


class ScenarioError(ValueError):
    """Invalid scenario configuration."""


class SchemaError(ScenarioError):
    def __init__(self, path, key: str, reason: str = "unexpected or invalid key"):
        self.path = str(path)
        self.key = key
        super().__init__(f"{path}: {key}: {reason}")


class UnknownTarget(ScenarioError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"unknown event target {name!r}; expected a driver "
                         f"({', '.join(DRIVERS)}) or component ({', '.join(COMPONENTS)})")


class OutOfRangeEvent(ScenarioError):
    pass


@dataclass(frozen=True)
class ScenarioEvent:
    time: float
    kind: str
    target: str
    value: float
    duration: float = 0.0

    def to_dict(self) -> dict:
        d = {"time": self.time, "kind": self.kind, "target": self.target, "value": self.value}
        if self.kind == "pulse":
            d["duration"] = self.duration
        return d


@dataclass(frozen=True)
class Variant:
    name: str
    events: tuple[ScenarioEvent, ...] = ()

    def to_dict(self) -> dict:
        return {"name": self.name, "events": [e.to_dict() for e in self.events]}


@dataclass
class ScenarioConfig:
    name: str
    t0: datetime.date
    horizon: float
    initial: InitialConditions
    dt: float = 1.0
    params_file: str | None = None
    params: OilParams | None = None
    events: tuple[ScenarioEvent, ...] = ()
    observed: str | None = None
    variants: tuple[Variant, ...] = ()
    description: str = ""
    base_dir: Path = field(default=Path("."), compare=False, repr=False)

    def resolve(self, rel: str) -> Path:
        p = Path(rel)
        return p if p.is_absolute() else self.base_dir / p

    def load_params(self) -> OilParams:
        if self.params is not None:
            return self.params
        return load_params(self.resolve(self.params_file))

    def load_observed(self) -> dataio.TimeSeries | None:
        if self.observed is None:
            return None
        return dataio.load_series(self.resolve(self.observed), "USD/bbl")

    def schedules(self, extra: Sequence[ScenarioEvent] = ()) -> dict[str, list[ScheduledChange]]:
        out: dict[str, list[ScheduledChange]] = {}
        for ev in tuple(self.events) + tuple(extra):
            # event times snap to the nearest grid point, ties toward the earlier one
            t = engine._snap(ev.time, self.dt) * self.dt
            out.setdefault(ev.target, []).append(
                ScheduledChange(ev.kind, t, ev.value, ev.duration))
        return out

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"name": self.name}
        if self.description:
            d["description"] = self.description
        d["t0"] = self.t0.isoformat()
        d["horizon"] = self.horizon
        d["dt"] = self.dt
        if self.params_file is not None:
            d["params_file"] = self.params_file
        if self.params is not None:
            d["params"] = self.params.to_dict()
        d["initial"] = {
            "p0": self.initial.p0,
            "supply": self.initial.supply.as_dict(),
            "demand": self.initial.demand.as_dict(),
        }
        d["events"] = [e.to_dict() for e in self.events]
        if self.observed is not None:
            d["observed"] = self.observed
        if self.variants:
            d["variants"] = [v.to_dict() for v in self.variants]
        return d


# -- params files ---------------------------------------------------------------

def load_params(path) -> OilParams:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(raw, dict) or "params" not in raw:
        raise SchemaError(path, "params", "params file needs a 'params' object")
    extra = set(raw) - {"format", "params", "note", "calibration"}
    if extra:
        raise SchemaError(path, sorted(extra)[0])
    try:
        return OilParams.from_dict(raw["params"]).validate()
    except (TypeError, ValueError) as exc:
        raise SchemaError(path, "params", str(exc)) from None


def write_params(params: OilParams, path, note: str = "", calibration: Mapping | None = None):
    doc: dict[str, Any] = {"format": PARAMS_FORMAT}
    if note:
        doc["note"] = note
    doc["params"] = params.to_dict()
    if calibration:
        doc["calibration"] = dict(calibration)
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


# -- parsing --------------------------------------------------------------------

_TOP_KEYS = {"name", "description", "t0", "horizon", "dt", "params_file", "params",
             "initial", "events", "observed", "variants"}
_REQUIRED = ("name", "t0", "horizon", "initial")


def _num(path, key, value, positive=False, nonneg=False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise SchemaError(path, key, "expected a finite number")
    if positive and not value > 0:
        raise SchemaError(path, key, "must be > 0")
    if nonneg and value < 0:
        raise SchemaError(path, key, "must be >= 0")
    return float(value)


def _components(path, key, obj, names) -> dict[str, float]:
    if not isinstance(obj, dict):
        raise SchemaError(path, key, "expected an object")
    for k in obj:
        if k not in names:
            raise SchemaError(path, f"{key}.{k}")
    missing = [n for n in names if n not in obj]
    if missing:
        raise SchemaError(path, f"{key}.{missing[0]}", "missing")
    return {n: _num(path, f"{key}.{n}", obj[n], nonneg=True) for n in names}


def _event(path, key, obj, horizon) -> ScenarioEvent:
    if not isinstance(obj, dict):
        raise SchemaError(path, key, "expected an object")
    allowed = {"time", "kind", "target", "value", "duration"}
    for k in obj:
        if k not in allowed:
            raise SchemaError(path, f"{key}.{k}")
    for k in ("time", "kind", "target", "value"):
        if k not in obj:
            raise SchemaError(path, f"{key}.{k}", "missing")
    kind = obj["kind"]
    if kind not in ("step", "pulse"):
        raise SchemaError(path, f"{key}.kind", "must be 'step' or 'pulse'")
    target = obj["target"]
    if not isinstance(target, str):
        raise SchemaError(path, f"{key}.target", "expected a string")
    if target not in DRIVERS and target not in COMPONENTS:
        raise UnknownTarget(target)
    time = _num(path, f"{key}.time", obj["time"])
    value = _num(path, f"{key}.value", obj["value"])
    if kind == "pulse":
        if "duration" not in obj:
            raise SchemaError(path, f"{key}.duration", "pulse needs a duration")
        duration = _num(path, f"{key}.duration", obj["duration"], nonneg=True)
    else:
        if "duration" in obj:
            raise SchemaError(path, f"{key}.duration", "only pulses take a duration")
        duration = 0.0
    if not 0 <= time <= horizon:
        raise OutOfRangeEvent(f"{path}: {key}: time {time:g} outside [0, {horizon:g}]")
    if target == "econ_depression" and value != 1.0:
        raise SchemaError(path, f"{key}.value", "econ_depression events take value 1")
    if target in ("geopolitical_upset", "policy_effect") and value < 0 and kind == "pulse":
        raise SchemaError(path, f"{key}.value", f"{target} must stay >= 0")
    return ScenarioEvent(time, kind, target, value, duration)


def _events(path, key, seq, horizon) -> tuple[ScenarioEvent, ...]:
    if not isinstance(seq, list):
        raise SchemaError(path, key, "expected a list")
    return tuple(_event(path, f"{key}[{i}]", e, horizon) for i, e in enumerate(seq))


def config_from_dict(raw: Mapping, path="<config>", base_dir: Path | None = None
                     ) -> ScenarioConfig:
    if not isinstance(raw, dict):
        raise SchemaError(path, "<root>", "expected a JSON object")
    for k in raw:
        if k not in _TOP_KEYS:
            raise SchemaError(path, k)
    for k in _REQUIRED:
        if k not in raw:
            raise SchemaError(path, k, "missing")
    if not isinstance(raw["name"], str) or not raw["name"]:
        raise SchemaError(path, "name", "expected a non-empty string")
    try:
        t0 = dataio.parse_date(raw["t0"])
    except (TypeError, ValueError, AttributeError):
        raise SchemaError(path, "t0", "expected YYYY-MM-DD") from None
    horizon = _num(path, "horizon", raw["horizon"], positive=True)
    dt_days = _num(path, "dt", raw.get("dt", 1.0), positive=True)
    if horizon < dt_days:
        raise SchemaError(path, "horizon", "must be >= dt")

    has_file = "params_file" in raw
    has_inline = "params" in raw
    if has_file == has_inline:
        raise SchemaError(path, "params_file", "give exactly one of params_file / params")
    params = None
    if has_inline:
        if not isinstance(raw["params"], dict):
            raise SchemaError(path, "params", "expected an object")
        try:
            params = OilParams.from_dict(raw["params"]).validate()
        except (TypeError, ValueError) as exc:
            raise SchemaError(path, "params", str(exc)) from None
    elif not isinstance(raw["params_file"], str):
        raise SchemaError(path, "params_file", "expected a path string")

    init = raw["initial"]
    if not isinstance(init, dict):
        raise SchemaError(path, "initial", "expected an object")
    for k in init:
        if k not in ("p0", "supply", "demand"):
            raise SchemaError(path, f"initial.{k}")
    for k in ("p0", "supply", "demand"):
        if k not in init:
            raise SchemaError(path, f"initial.{k}", "missing")
    initial = InitialConditions(
        SupplyComponents(**_components(path, "initial.supply", init["supply"], SUPPLY)),
        DemandComponents(**_components(path, "initial.demand", init["demand"], DEMAND)),
        _num(path, "initial.p0", init["p0"], positive=True),
    )

    events = _events(path, "events", raw.get("events", []), horizon)
    variants = []
    seen = set()
    for i, v in enumerate(raw.get("variants", [])):
        key = f"variants[{i}]"
        if not isinstance(v, dict) or set(v) - {"name", "events"} or "name" not in v:
            raise SchemaError(path, key, "variant needs 'name' and optional 'events'")
        if not isinstance(v["name"], str) or not v["name"] or v["name"] in seen:
            raise SchemaError(path, f"{key}.name", "names must be unique non-empty strings")
        seen.add(v["name"])
        variants.append(Variant(v["name"], _events(path, f"{key}.events", v.get("events", []),
                                                   horizon)))
    for k in ("observed", "description"):
        if k in raw and not isinstance(raw[k], str):
            raise SchemaError(path, k, "expected a string")

    return ScenarioConfig(
        name=raw["name"], t0=t0, horizon=horizon, initial=initial, dt=dt_days,
        params_file=raw.get("params_file"), params=params, events=events,
        observed=raw.get("observed"), variants=tuple(variants),
        description=raw.get("description", ""),
        base_dir=base_dir if base_dir is not None else Path("."),
    )


def bundled_scenarios() -> list[str]:
    return sorted(p.stem for p in (dataio.data_dir() / "scenarios").glob("*.json"))


def locate(name_or_path) -> Path:
    """A config path, or the name of a bundled scenario."""
    p = Path(name_or_path)
    if p.exists():
        return p
    bundled = dataio.data_dir() / "scenarios" / f"{name_or_path}.json"
    if bundled.exists():
        return bundled
    raise FileNotFoundError(f"no scenario file or bundled scenario named {name_or_path!r}")


def parse_scenario(path) -> ScenarioConfig:
    path = locate(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(path, "<root>", f"invalid JSON: {exc}") from None
    return config_from_dict(raw, path, path.resolve().parent)


def write_scenario(config: ScenarioConfig, path) -> None:
    Path(path).write_text(json.dumps(config.to_dict(), indent=2) + "\n", encoding="utf-8")


# -- running --------------------------------------------------------------------

def build_model(config: ScenarioConfig, params: OilParams | None = None,
                extra_events: Sequence[ScenarioEvent] = (), dt: float | None = None):
    params = params or config.load_params()
    dt = config.dt if dt is None else dt
    spec = build_oil_model(params, config.initial, config.schedules(extra_events), dt=dt)
    return engine.compile(spec)


def simulate_config(config: ScenarioConfig, params: OilParams | None = None,
                    extra_events: Sequence[ScenarioEvent] = (), horizon: float | None = None,
                    dt: float | None = None) -> Trajectory:
    dt = config.dt if dt is None else dt
    model = build_model(config, params, extra_events, dt)
    return engine.simulate(model, None, config.horizon if horizon is None else horizon, dt=dt)


def _fmt(v: float) -> str:
    return repr(float(v))


def write_trajectory(traj: Trajectory, path) -> None:
    cols = [traj.times] + [traj[c] for c in TRAJECTORY_COLUMNS[1:]]
    lines = [",".join(TRAJECTORY_COLUMNS)]
    for row in zip(*(c.tolist() for c in cols)):
        lines.append(",".join(_fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_gnuplot(traj: Trajectory, path, label: str = "") -> None:
    lines = [f"# {label}".rstrip(), "# t price"]
    lines += [f"{_fmt(t)} {_fmt(p)}" for t, p in zip(traj.times.tolist(), traj["price"].tolist())]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


@dataclass
class RunReport:
    name: str
    out_dir: Path
    files: list[Path]
    metrics: metrics.BacktestMetrics | None = None
    final_price: float = float("nan")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "out_dir": str(self.out_dir),
            "files": [p.name for p in self.files],
            "final_price": self.final_price,
            "metrics": self.metrics.to_dict() if self.metrics else None,
        }


def run_scenario(config: ScenarioConfig, out_dir, dt: float | None = None,
                 observed: dataio.TimeSeries | None = None) -> RunReport:
    """Simulate ``config`` and write trajectory.csv, price.dat and, when an
    observed series is available, metrics.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    traj = simulate_config(config, dt=dt)
    files = [out / "trajectory.csv", out / "price.dat"]
    write_trajectory(traj, files[0])
    write_gnuplot(traj, files[1], f"{config.name} simulated price, days since {config.t0}")
    observed = observed if observed is not None else config.load_observed()
    m = None
    if observed is not None:
        m = metrics.score(traj.times, traj["price"], observed, config.t0)
        doc = {"scenario": config.name, "t0": config.t0.isoformat(),
               "observed": observed.name, **m.to_dict()}
        files.append(out / "metrics.json")
        files[-1].write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    return RunReport(config.name, out, files, m, float(traj["price"][-1]))


def forecast(config: ScenarioConfig, out_dir=None, horizon: float = FORECAST_HORIZON
             ) -> dict[str, Trajectory]:
    """60-day forward runs, one per listed variant (or a single baseline).

    Each variant's events are added to the config's own events.  Events must
    fall inside the forecast horizon.
    """
    variants = config.variants or (Variant("baseline"),)
    for ev in list(config.events) + [e for v in variants for e in v.events]:
        if not 0 <= ev.time <= horizon:
            raise OutOfRangeEvent(
                f"{config.name}: event on {ev.target} at t={ev.time:g} is outside the "
                f"{horizon:g}-day forecast window")
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    runs = {}
    for v in variants:
        traj = simulate_config(config, extra_events=v.events, horizon=horizon)
        runs[v.name] = traj
        if out is not None:
            write_trajectory(traj, out / f"forecast_{v.name}.csv")
    return runs
