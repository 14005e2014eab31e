"""Command-line front end.

Exit status: 0 on success, 2 on invalid input (config, params, data), 3 when
the simulation aborts.
"""
from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import calibration, dataio, engine, scenario
from .metrics import NoOverlap
from .oil import COMPONENTS, InvalidParams, OilParams, ScheduledChange

log = logging.getLogger("petrosim")

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_ABORT = 3

INPUT_ERRORS = (scenario.ScenarioError, InvalidParams, dataio.DataError,
                calibration.CalibrationError, NoOverlap, FileNotFoundError,
                engine.ModelError)


def _simulate_one(config_path: str, out: str, dt_days: float | None) -> dict:
    cfg = scenario.parse_scenario(config_path)
    return scenario.run_scenario(cfg, out, dt=dt_days).to_dict()


def cmd_simulate(args) -> int:
    configs = args.config
    outs = ([args.out] if len(configs) == 1
            else [str(Path(args.out) / Path(c).stem) for c in configs])
    if args.jobs > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            reports = list(pool.map(_simulate_one, configs, outs, [args.dt] * len(configs)))
    else:
        reports = [_simulate_one(c, o, args.dt) for c, o in zip(configs, outs)]
    for r in reports:
        print(f"{r['name']}: final price {r['final_price']:.2f} USD/bbl -> {r['out_dir']}")
        if r["metrics"]:
            m = r["metrics"]
            print(f"  mape {m['mape']:.1f}%  rmse {m['rmse']:.2f}  "
                  f"directional accuracy {m['directional_accuracy']:.2f}")
    return EXIT_OK


def cmd_backtest(args) -> int:
    cfg = scenario.parse_scenario(args.config)
    observed = dataio.load_series(args.observed, "USD/bbl")
    rep = scenario.run_scenario(cfg, args.out, observed=observed)
    m = rep.metrics
    print(f"{cfg.name}: mape {m.mape:.2f}%  rmse {m.rmse:.3f}  "
          f"directional accuracy {m.directional_accuracy:.3f}  ({m.n_points} points)")
    return EXIT_OK


def cmd_forecast(args) -> int:
    cfg = scenario.parse_scenario(args.config)
    runs = scenario.forecast(cfg, args.out)
    for name, traj in runs.items():
        p = traj["price"]
        print(f"forecast {cfg.name}/{name}: day 0 {p[0]:.2f} -> day "
              f"{traj.times[-1]:g} {p[-1]:.2f} USD/bbl")
    return EXIT_OK


def _parse_component_trend(text: str) -> tuple[str, Path]:
    name, sep, path = text.partition("=")
    if not sep or name not in COMPONENTS:
        raise argparse.ArgumentTypeError(
            f"expected COMPONENT=FILE with COMPONENT one of {', '.join(COMPONENTS)}")
    return name, Path(path)


def cmd_calibrate(args) -> int:
    price = dataio.load_series(args.price, "USD/bbl")
    supply = dataio.load_series(args.supply, "mb/d")
    demand = dataio.load_series(args.demand, "mb/d")
    growth_names = ("growth_eus", "growth_ribc")
    if len(args.growth) > len(growth_names):
        raise scenario.ScenarioError("at most two --growth series (EU+US, then RIBC)")
    growth = {n: dataio.load_series(p, "fraction/year") for n, p in zip(growth_names, args.growth)}
    base = scenario.load_params(args.base_params) if args.base_params else OilParams()
    start, end = (dataio.parse_date(d) for d in args.window)
    drivers = {}
    if args.depression:
        s, d = args.depression
        drivers["econ_depression"] = [ScheduledChange("pulse", s, 1.0, d)]
    config = calibration.CalibrationConfig(start=start, end=end, base=base,
                                           fixed=frozenset(args.fix), drivers=drivers)
    params, reports = calibration.calibrate_core(price, supply, demand, growth, config)

    trends = {}
    for comp, path in args.component_trend:
        rate, rep = calibration.fit_log_trend(dataio.load_series(path, "mb/d"), start, end)
        trends[comp] = rate
        reports[f"trend_{comp}"] = rep
    if trends:
        params = params.replace(baseline_trend={**params.baseline_trend, **trends})
    params.validate()

    record = {
        "window": [start.isoformat(), end.isoformat()],
        "inputs": {"price": Path(args.price).name, "supply": Path(args.supply).name,
                   "demand": Path(args.demand).name,
                   **{k: Path(v).name for k, v in zip(growth_names, args.growth)},
                   **{f"trend_{c}": p.name for c, p in args.component_trend}},
        "fixed": sorted(args.fix),
        "depression_pulse": list(args.depression) if args.depression else None,
        "fits": {k: r.to_dict() for k, r in reports.items()},
    }
    scenario.write_params(params, args.out, note=args.note or "", calibration=record)
    for k, r in reports.items():
        coefs = ", ".join(f"{c}={v:.6g}" for c, v in r.coefficients.items())
        warn = "  [ill-conditioned]" if r.condition_warning else ""
        print(f"{k}: {coefs}  r2={r.r_squared:.3f}{warn}")
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_scenarios(args) -> int:
    for name in scenario.bundled_scenarios():
        cfg = scenario.parse_scenario(name)
        print(f"{name}: {cfg.description}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="petrosim",
                                     description="Expectation-driven oil market simulator")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one or more scenario configs")
    p.add_argument("config", nargs="+", help="config path or bundled scenario name")
    p.add_argument("--out", required=True)
    p.add_argument("--dt", type=float, default=None, help="override the step (days)")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("calibrate", help="fit parameters to historical series")
    p.add_argument("--price", required=True)
    p.add_argument("--supply", required=True)
    p.add_argument("--demand", required=True)
    p.add_argument("--growth", action="append", default=[],
                   help="growth series, fraction/year (first EU+US, second RIBC)")
    p.add_argument("--window", nargs=2, metavar=("START", "END"), required=True)
    p.add_argument("--out", required=True, help="params file to write")
    p.add_argument("--base-params", help="params file supplying fixed values and time constants")
    p.add_argument("--fix", action="append", default=[], choices=calibration.CORE_FIXABLE,
                   help="keep this group at its base value (repeatable)")
    p.add_argument("--depression", nargs=2, type=float, metavar=("START", "DURATION"),
                   help="depression pulse, days from window start, for the weight fit")
    p.add_argument("--component-trend", action="append", default=[],
                   type=_parse_component_trend, metavar="COMPONENT=FILE",
                   help="set a block's baseline trend from the log-linear trend of FILE")
    p.add_argument("--note", help="free-text note stored in the params file")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("backtest", help="simulate and score against an observed price series")
    p.add_argument("config")
    p.add_argument("--observed", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_backtest)

    p = sub.add_parser("forecast", help="60-day forward runs, one file per variant")
    p.add_argument("config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("scenarios", help="list bundled scenarios")
    p.set_defaults(func=cmd_scenarios)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except engine.SimulationError as exc:
        print(f"petrosim: simulation aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT
    except INPUT_ERRORS as exc:
        print(f"petrosim: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
