import datetime as dt

import numpy as np
import pytest

from petrosim import dataio, engine, oil

T0 = dt.date(2000, 1, 1)


def bundled_path(*parts):
    return dataio.data_dir().joinpath(*parts)


def require_bundled(*parts):
    p = bundled_path(*parts)
    if not p.exists():
        pytest.skip(f"bundled data missing: {p}")
    return p


def decay_model(k: float = 1.0, s0: float = 1.0, dt_: float = 1.0) -> engine.CompiledModel:
    spec = engine.ModelSpec(dt=dt_)
    spec.add(
        engine.constant("k", k),
        engine.flow("decay", lambda s, k_: k_ * s, ("S", "k")),
        engine.stock("S", s0, outflows=("decay",)),
    )
    return engine.compile(spec)


def balanced_initial(scale: float = 1.0, p0: float = 100.0) -> oil.InitialConditions:
    return oil.InitialConditions(
        oil.SupplyComponents(30.0 * scale, 9.0 * scale, 40.0 * scale, 0.6 * scale, 2.0 * scale),
        oil.DemandComponents(45.0 * scale, 20.0 * scale, 16.6 * scale),
        p0,
    )


def daily_series(name, unit, values, t0=T0):
    dates = tuple(t0 + dt.timedelta(days=i) for i in range(len(values)))
    return dataio.TimeSeries(name, unit, dates, np.asarray(values, dtype=float))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def acceptance_line(number: int, passed: bool, detail: str) -> str:
    line = f"ACCEPTANCE {number}: {'PASS' if passed else 'FAIL'}  {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
