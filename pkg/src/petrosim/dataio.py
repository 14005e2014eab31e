"""Loading, writing and resampling of dated series.

File format: UTF-8 CSV with header ``date,value``.  Lines starting with
``#`` may precede the header; ``# key: value`` comments are kept as
metadata (``unit`` and ``name`` are understood).
"""
from __future__ import annotations

import datetime as dt
import math
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

HEADER = "date,value"


class DataError(ValueError):
    pass


class ParseError(DataError):
    def __init__(self, path, line: int, reason: str):
        self.path = str(path)
        self.line = line
        super().__init__(f"{path}:{line}: {reason}")


class DuplicateDate(DataError):
    def __init__(self, date: dt.date):
        self.date = date
        super().__init__(f"duplicate date {date.isoformat()}")


class UnitMismatch(DataError):
    pass


class CoverageGap(DataError):
    def __init__(self, date: dt.date | str):
        self.date = date
        super().__init__(f"series does not cover grid point {date}")


@dataclass(frozen=True)
class TimeSeries:
    name: str
    unit: str
    dates: tuple[dt.date, ...]
    values: np.ndarray = field(compare=False)
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if len(self.dates) != len(values):
            raise DataError("dates and values differ in length")
        if not np.all(np.isfinite(values)):
            raise DataError(f"{self.name}: non-finite values")
        for a, b in zip(self.dates, self.dates[1:]):
            if b == a:
                raise DuplicateDate(b)
            if b < a:
                raise DataError(f"{self.name}: dates not increasing at {b}")

    def __eq__(self, other):
        return (isinstance(other, TimeSeries) and self.name == other.name
                and self.unit == other.unit and self.dates == other.dates
                and np.array_equal(self.values, other.values))

    def __len__(self):
        return len(self.dates)

    @property
    def points(self) -> list[tuple[dt.date, float]]:
        return list(zip(self.dates, self.values.tolist()))

    @classmethod
    def from_points(cls, name: str, unit: str, points) -> "TimeSeries":
        points = sorted(points)
        return cls(name, unit, tuple(d for d, _ in points), np.array([v for _, v in points]))

    def offsets(self, t0: dt.date) -> np.ndarray:
        """Day offsets of the observations relative to ``t0``."""
        return np.array([(d - t0).days for d in self.dates], dtype=float)

    def window(self, start: dt.date, end: dt.date) -> "TimeSeries":
        keep = [i for i, d in enumerate(self.dates) if start <= d <= end]
        return TimeSeries(self.name, self.unit, tuple(self.dates[i] for i in keep),
                          self.values[keep], dict(self.meta))


def parse_date(text: str) -> dt.date:
    return dt.date.fromisoformat(text.strip())


def load_series(path, expected_unit: str | None = None, name: str | None = None) -> TimeSeries:
    path = Path(path)
    meta: dict[str, str] = {}
    rows: list[tuple[dt.date, float]] = []
    header_seen = False
    with path.open(encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not header_seen:
                if not line:
                    continue
                if line.startswith("#"):
                    key, sep, val = line[1:].partition(":")
                    if sep:
                        meta[key.strip().lower()] = val.strip()
                    continue
                if line != HEADER:
                    raise ParseError(path, lineno, f"expected header {HEADER!r}, got {line!r}")
                header_seen = True
                continue
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise ParseError(path, lineno, "expected two fields")
            try:
                date = parse_date(parts[0])
            except ValueError:
                raise ParseError(path, lineno, f"bad date {parts[0]!r}") from None
            try:
                value = float(parts[1])
            except ValueError:
                raise ParseError(path, lineno, f"bad value {parts[1]!r}") from None
            if not math.isfinite(value):
                raise ParseError(path, lineno, f"non-finite value {parts[1]!r}")
            rows.append((date, value))
    if not header_seen:
        raise ParseError(path, 1, "missing header")

    rows.sort(key=lambda r: r[0])
    for (a, _), (b, _) in zip(rows, rows[1:]):
        if a == b:
            raise DuplicateDate(a)

    unit = meta.get("unit")
    if expected_unit is not None:
        if unit is not None and unit != expected_unit:
            raise UnitMismatch(f"{path}: unit {unit!r}, expected {expected_unit!r}")
        unit = expected_unit
    return TimeSeries(name or meta.get("name") or path.stem, unit or "",
                      tuple(d for d, _ in rows), np.array([v for _, v in rows]), meta)


def write_series(series: TimeSeries, path) -> None:
    lines = [f"# name: {series.name}", f"# unit: {series.unit}"]
    for k, v in series.meta.items():
        if k not in ("name", "unit"):
            lines.append(f"# {k}: {v}")
    lines.append(HEADER)
    lines += [f"{d.isoformat()},{v!r}" for d, v in series.points]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def grid(horizon: float, dt: float) -> np.ndarray:
    n = int(round(horizon / dt))
    return dt * np.arange(n + 1)


def resample(series: TimeSeries, t0: dt.date, horizon: float, dt_days: float = 1.0) -> np.ndarray:
    """Linear interpolation of ``series`` onto ``t0 + k*dt``, k = 0..horizon/dt.

    Never extrapolates: a grid point outside the observed span raises
    :class:`CoverageGap` naming the first uncovered grid date.
    """
    if dt_days <= 0:
        raise ValueError("dt must be > 0")
    x = series.offsets(t0)
    g = grid(horizon, dt_days)
    if len(x) == 0:
        raise CoverageGap(t0.isoformat())
    outside = (g < x[0]) | (g > x[-1])
    if outside.any():
        k = int(np.argmax(outside))
        when = t0 + dt.timedelta(days=float(g[k]))
        raise CoverageGap(when.isoformat())
    return np.interp(g, x, series.values)


def common_window(*series: TimeSeries) -> tuple[dt.date, dt.date]:
    start = max(s.dates[0] for s in series)
    end = min(s.dates[-1] for s in series)
    return start, end


def data_dir() -> Path:
    """Root of the bundled data, overridable with ``PETROSIM_DATA_DIR``."""
    env = os.environ.get("PETROSIM_DATA_DIR")
    if env:
        return Path(env)
    return Path(str(resources.files("petrosim") / "data"))


def bundled_series(name: str, expected_unit: str | None = None) -> TimeSeries:
    path = data_dir() / "series" / (name if name.endswith(".csv") else name + ".csv")
    return load_series(path, expected_unit)


def stack(series: Sequence[TimeSeries], t0: dt.date, horizon: float,
          dt_days: float = 1.0) -> dict[str, np.ndarray]:
    return {s.name: resample(s, t0, horizon, dt_days) for s in series}
