"""Realized volatility and realized range construction from intraday prices.

Variance-scale estimators:

* realized variance: sum of squared log close-to-close increments on a fixed
  minute grid,
* realized range: sum of squared log interval ranges divided by 4*log(2),
* scaled variants: trailing-window ratio against a less noisy daily proxy
  (squared daily return for RV, Parkinson daily range for RR),
* sub-sampled variants: average of the estimator over all offset-shifted
  grids, with a single 4*log(2) normalization for the range version.

Model input is the volatility-scale (square-rooted) measure by default; the
variance scale stays available through ``MeasureConfig.output_scale``.
Days whose required grid points are missing are dropped with a warning, never
interpolated.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .data_io import DailyRecord, IntradayDay

log = logging.getLogger(__name__)

RANGE_NORM = 4.0 * math.log(2.0)

KIND_RV = "rv"
KIND_RR = "rr"
KIND_SCRV = "scrv"
KIND_SCRR = "scrr"
KIND_SSRV = "ssrv"
KIND_SSRR = "ssrr"
KIND_ABS_RETURN = "abs-return"
KIND_DAILY_RANGE = "daily-range"

ALL_KINDS = (
    KIND_RV,
    KIND_RR,
    KIND_SCRV,
    KIND_SCRR,
    KIND_SSRV,
    KIND_SSRR,
    KIND_ABS_RETURN,
    KIND_DAILY_RANGE,
)


class MissingGridPointError(ValueError):
    """A required grid point has no tick on this day."""


@dataclass(frozen=True)
class MeasureConfig:
    """How to turn intraday days into the model's daily measure series."""

    kind: str = KIND_SSRR
    freq: int = 5
    offset: int = 1
    q: int = 66
    output_scale: str = "volatility"

    def __post_init__(self):
        if self.kind not in ALL_KINDS:
            raise ValueError(f"unknown measure kind {self.kind!r}; expected one of {ALL_KINDS}")
        if self.freq < 1 or self.offset < 1 or self.freq % self.offset != 0:
            raise ValueError("base frequency must be a positive multiple of the offset")
        if self.q < 1:
            raise ValueError("scaling window q must be >= 1")
        if self.output_scale not in ("volatility", "variance"):
            raise ValueError("output_scale must be 'volatility' or 'variance'")


def _grid_minutes(day: IntradayDay, freq: int, shift: int = 0):
    """Required grid minutes for one offset shift; raises if any is missing."""
    start = int(day.minutes[0]) + shift
    stop = int(day.minutes[-1])
    if start + freq > stop:
        raise MissingGridPointError(
            f"{day.date}: session too short for a {freq}-minute interval at shift {shift}"
        )
    grid = np.arange(start, stop + 1, freq)
    pos = np.searchsorted(day.minutes, grid)
    if np.any(pos >= day.minutes.size) or np.any(day.minutes[pos] != grid):
        missing = grid[(pos >= day.minutes.size) | (day.minutes[np.minimum(pos, day.minutes.size - 1)] != grid)]
        raise MissingGridPointError(f"{day.date}: missing grid minute(s) {missing[:5].tolist()}")
    return grid, pos


def rv(day: IntradayDay, freq: int = 5) -> float:
    """Realized variance on the freq-minute close grid."""
    _, pos = _grid_minutes(day, freq)
    inc = np.diff(np.log(day.price[pos]))
    return float(np.dot(inc, inc))


def _range_sq_sum(day: IntradayDay, freq: int, shift: int) -> float:
    """Sum of squared log interval ranges for one offset shift, unnormalized.

    Interval extremes are taken over the stored high/low columns with both
    interval endpoints included, so a path monotone within each interval has
    range equal to the absolute endpoint increment.
    """
    _, pos = _grid_minutes(day, freq, shift)
    total = 0.0
    for lo, hi in zip(pos, pos[1:]):
        h = day.high[lo : hi + 1].max()
        l = day.low[lo : hi + 1].min()
        total += (math.log(h) - math.log(l)) ** 2
    return total


def rr(day: IntradayDay, freq: int = 5) -> float:
    """Realized range on the freq-minute grid, normalized by 4*log(2)."""
    return _range_sq_sum(day, freq, 0) / RANGE_NORM


def subsampled_rv(day: IntradayDay, freq: int = 5, offset: int = 1) -> float:
    """Average of the shifted realized variances over freq/offset grids."""
    if freq % offset != 0:
        raise ValueError("offset must divide the base frequency")
    n_k = freq // offset
    total = 0.0
    for i in range(n_k):
        _, pos = _grid_minutes(day, freq, i * offset)
        inc = np.diff(np.log(day.price[pos]))
        total += float(np.dot(inc, inc))
    return total / n_k


def subsampled_rr(day: IntradayDay, freq: int = 5, offset: int = 1) -> float:
    """Shift-averaged realized range with a single 4*log(2)*n_k denominator."""
    if freq % offset != 0:
        raise ValueError("offset must divide the base frequency")
    n_k = freq // offset
    total = 0.0
    for i in range(n_k):
        total += _range_sq_sum(day, freq, i * offset)
    return total / (RANGE_NORM * n_k)


def scale(measure, proxy, q: int):
    """Trailing-window ratio scaling of a high-frequency measure.

    out[t] = (sum of proxy over the q prior days / sum of measure over the q
    prior days) * measure[t]. The first q entries, and any entry whose window
    touches a nan, are nan. A window of all-zero high-frequency measures is an
    error.
    """
    measure = np.asarray(measure, dtype=float)
    proxy = np.asarray(proxy, dtype=float)
    if measure.shape != proxy.shape:
        raise ValueError("measure and proxy series must have equal length")
    if measure.size <= q:
        raise ValueError(f"need more than q={q} days to scale")
    out = np.full(measure.size, np.nan)
    for t in range(q, measure.size):
        win_m = measure[t - q : t]
        win_p = proxy[t - q : t]
        if np.isnan(win_m).any() or np.isnan(win_p).any() or math.isnan(measure[t]):
            continue
        denom = win_m.sum()
        if denom == 0.0:
            raise ValueError(f"zero denominator: all {q} prior measures are zero at index {t}")
        out[t] = win_p.sum() / denom * measure[t]
    return out


def _day_variance(day: IntradayDay, cfg: MeasureConfig) -> float:
    if cfg.kind in (KIND_RV, KIND_SCRV):
        return rv(day, cfg.freq)
    if cfg.kind in (KIND_RR, KIND_SCRR):
        return rr(day, cfg.freq)
    if cfg.kind == KIND_SSRV:
        return subsampled_rv(day, cfg.freq, cfg.offset)
    if cfg.kind == KIND_SSRR:
        return subsampled_rr(day, cfg.freq, cfg.offset)
    raise AssertionError(cfg.kind)


def parkinson(day: IntradayDay) -> float:
    """Daily range variance estimator (log H - log L)^2 / (4 log 2)."""
    h = float(day.high.max())
    l = float(day.low.min())
    return (math.log(h) - math.log(l)) ** 2 / RANGE_NORM


def build_measure_series(days, cfg: MeasureConfig) -> list[DailyRecord]:
    """Daily records (date, log return, measure) from intraday days.

    The first day carries no return and is always dropped; scaled kinds
    additionally lose the q-day warm-up window. Days with incomplete grids
    are dropped with a warning.
    """
    days = list(days)
    if len(days) < 2:
        raise ValueError("need at least 2 intraday days")
    dates = [d.date for d in days]
    if any(b <= a for a, b in zip(dates, dates[1:])):
        raise ValueError("intraday days must be in strictly increasing date order")
    closes = np.array([d.close for d in days])
    rets = np.concatenate([[np.nan], np.diff(np.log(closes))])

    n = len(days)
    if cfg.kind == KIND_ABS_RETURN:
        var = rets**2
    elif cfg.kind == KIND_DAILY_RANGE:
        var = np.array([parkinson(d) for d in days])
    else:
        var = np.full(n, np.nan)
        for i, day in enumerate(days):
            try:
                var[i] = _day_variance(day, cfg)
            except MissingGridPointError as exc:
                log.warning("dropping %s from measures: %s", day.date, exc)
        if cfg.kind in (KIND_SCRV, KIND_SCRR):
            if cfg.kind == KIND_SCRV:
                proxy = rets**2
            else:
                proxy = np.array([parkinson(d) for d in days])
            var = scale(var, proxy, cfg.q)

    x = np.sqrt(var) if cfg.output_scale == "volatility" else var
    return [
        DailyRecord(dates[i], float(rets[i]), float(x[i]))
        for i in range(n)
        if math.isfinite(rets[i]) and math.isfinite(x[i])
    ]
