"""Price data ingestion and the artifact file formats.

All text formats store floats via ``repr``, the shortest representation that
round-trips IEEE doubles exactly. Dates are ISO yyyy-mm-dd. Intraday
timestamps are integer minute offsets from the session open; calendar and
timezone handling is out of scope.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
import logging
import math
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

INTRADAY_COLUMNS = ("date", "minute", "price", "high", "low")
DAILY_HEADER = ("date", "return", "measure")
FORECAST_HEADER = ("date", "var", "es", "model", "alpha")


class SchemaError(ValueError):
    """An input file does not conform to its documented schema."""


def _fmt(x: float) -> str:
    x = float(x)
    return "nan" if math.isnan(x) else repr(x)


def _parse_float(s: str, path, lineno: int, col: str) -> float:
    try:
        return float(s)
    except ValueError:
        raise SchemaError(f"{path}:{lineno}: cannot parse {col}={s!r} as a number")


def _parse_date(s: str, path, lineno: int) -> dt.date:
    try:
        return dt.date.fromisoformat(s)
    except ValueError:
        raise SchemaError(f"{path}:{lineno}: cannot parse date {s!r}")


@dataclass(frozen=True)
class IntradayDay:
    """One trading day of minute-stamped prices.

    ``minutes`` are offsets from the session open, strictly increasing.
    ``high``/``low`` are within-minute extremes and default to the price when
    the source file does not carry them.
    """

    date: dt.date
    minutes: np.ndarray
    price: np.ndarray
    high: np.ndarray
    low: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "minutes", np.asarray(self.minutes, dtype=np.int64))
        for name in ("price", "high", "low"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if self.minutes.size < 2:
            raise ValueError(f"{self.date}: an intraday day needs at least 2 ticks")
        if np.any(np.diff(self.minutes) <= 0):
            raise ValueError(f"{self.date}: minute offsets must be strictly increasing")
        for name in ("price", "high", "low"):
            if np.any(getattr(self, name) <= 0.0):
                raise ValueError(f"{self.date}: non-positive {name}")

    @property
    def n_ticks(self) -> int:
        return int(self.minutes.size)

    @property
    def close(self) -> float:
        return float(self.price[-1])


@dataclass(frozen=True)
class DailyRecord:
    """Aligned daily log return and realized-measure value (return scale)."""

    date: dt.date
    ret: float
    measure: float

    def __post_init__(self):
        if not math.isfinite(self.ret) or not math.isfinite(self.measure):
            raise ValueError(f"{self.date}: return and measure must be finite")
        if self.measure < 0.0:
            raise ValueError(f"{self.date}: measure must be non-negative")


@dataclass(frozen=True)
class ForecastRecord:
    """One-day-ahead (VaR, ES) forecast; flagged when estimation failed."""

    date: dt.date
    var: float
    es: float
    model: str
    alpha: float
    origin: int = -1
    flag: str = "ok"

    def __post_init__(self):
        if self.flag == "ok" and self.alpha < 0.5:
            if not (self.es <= self.var < 0.0):
                raise ValueError(
                    f"{self.date}: ok forecast must satisfy es <= var < 0, "
                    f"got var={self.var}, es={self.es}"
                )

    @property
    def ok(self) -> bool:
        return self.flag == "ok"


def _check_increasing_dates(dates, what: str) -> None:
    for a, b in zip(dates, dates[1:]):
        if b <= a:
            raise SchemaError(f"{what}: dates must be strictly increasing ({a} then {b})")


def load_intraday(path) -> list[IntradayDay]:
    """Read an intraday CSV into one IntradayDay per distinct date.

    Header is ``date,minute,price`` with optional ``high``/``low`` columns.
    Days with fewer than 2 ticks are dropped with a warning; duplicate
    (date, minute) pairs and non-positive prices are errors.
    """
    ticks: dict[dt.date, dict[int, tuple[float, float, float]]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return []
        header = tuple(h.strip() for h in header)
        if not set(header) <= set(INTRADAY_COLUMNS) or not {"date", "minute", "price"} <= set(header):
            raise SchemaError(f"{path}: bad intraday header {header}")
        idx = {name: header.index(name) for name in header}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise SchemaError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            date = _parse_date(row[idx["date"]], path, lineno)
            try:
                minute = int(row[idx["minute"]])
            except ValueError:
                raise SchemaError(f"{path}:{lineno}: bad minute {row[idx['minute']]!r}")
            price = _parse_float(row[idx["price"]], path, lineno, "price")
            high = _parse_float(row[idx["high"]], path, lineno, "high") if "high" in idx else price
            low = _parse_float(row[idx["low"]], path, lineno, "low") if "low" in idx else price
            if price <= 0 or high <= 0 or low <= 0:
                raise SchemaError(f"{path}:{lineno}: non-positive price")
            day = ticks.setdefault(date, {})
            if minute in day:
                raise SchemaError(f"{path}:{lineno}: duplicate (date, minute) = ({date}, {minute})")
            day[minute] = (price, high, low)
    out = []
    for date in sorted(ticks):
        day = ticks[date]
        if len(day) < 2:
            log.warning("dropping %s: only %d tick(s)", date, len(day))
            continue
        minutes = sorted(day)
        price, high, low = (np.array([day[m][k] for m in minutes]) for k in range(3))
        out.append(IntradayDay(date, np.array(minutes), price, high, low))
    return out


def daily_returns(closes) -> list[tuple[dt.date, float]]:
    """Daily log returns log(C_t) - log(C_{t-1}) from (date, close) pairs."""
    closes = list(closes)
    if len(closes) < 2:
        raise ValueError("need at least 2 closing prices")
    if any(c <= 0 for _, c in closes):
        raise ValueError("closing prices must be positive")
    return [
        (date, math.log(c) - math.log(c_prev))
        for (_, c_prev), (date, c) in zip(closes, closes[1:])
    ]


def write_daily(records, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(DAILY_HEADER)
        for rec in records:
            w.writerow([rec.date.isoformat(), _fmt(rec.ret), _fmt(rec.measure)])


def load_daily(path) -> list[DailyRecord]:
    records = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != DAILY_HEADER:
            raise SchemaError(f"{path}: expected header {','.join(DAILY_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise SchemaError(f"{path}:{lineno}: expected 3 fields")
            records.append(
                DailyRecord(
                    _parse_date(row[0], path, lineno),
                    _parse_float(row[1], path, lineno, "return"),
                    _parse_float(row[2], path, lineno, "measure"),
                )
            )
    _check_increasing_dates([r.date for r in records], str(path))
    return records


def write_forecasts(records, path) -> None:
    """Write forecast records; failed forecasts are stored with nan var/es."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(FORECAST_HEADER)
        for rec in records:
            w.writerow(
                [rec.date.isoformat(), _fmt(rec.var), _fmt(rec.es), rec.model, _fmt(rec.alpha)]
            )


def load_forecasts(path) -> list[ForecastRecord]:
    """Load a forecast CSV; nan var/es rows come back flagged as failed."""
    records = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != FORECAST_HEADER:
            raise SchemaError(f"{path}: expected header {','.join(FORECAST_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 5:
                raise SchemaError(f"{path}:{lineno}: expected 5 fields")
            var = _parse_float(row[1], path, lineno, "var")
            es = _parse_float(row[2], path, lineno, "es")
            flag = "ok" if math.isfinite(var) and math.isfinite(es) else "failed"
            try:
                records.append(
                    ForecastRecord(
                        _parse_date(row[0], path, lineno),
                        var,
                        es,
                        row[3],
                        _parse_float(row[4], path, lineno, "alpha"),
                        flag=flag,
                    )
                )
            except ValueError as exc:
                raise SchemaError(f"{path}:{lineno}: {exc}")
    _check_increasing_dates([r.date for r in records], str(path))
    return records


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, dt.date):
        return obj.isoformat()
    return obj


def write_report(report: dict, path) -> None:
    """Write a report dict as JSON; non-finite floats become null."""
    with open(path, "w") as fh:
        json.dump(_jsonable(report), fh, indent=2)
        fh.write("\n")


def load_report(path) -> dict:
    with open(path) as fh:
        return json.load(fh)
