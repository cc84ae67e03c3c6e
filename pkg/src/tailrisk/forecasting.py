"""Rolling fixed-window one-step-ahead forecast production.

For each origin t = n-1 .. N-2 (0-based index of the last in-sample day) the
model is fit on the n records ending at t and the forecast for day t+1 is
emitted. With stride s > 1 parameters are re-estimated every s origins and
the point estimates are reused in between; the filter is still re-run on the
current window, so the forecast for day t+1 never sees data beyond day t.
Estimation failures flag the affected records instead of filling them; a
flagged record is excluded from scoring downstream.

Estimators are callables (spec, window_records, seed) -> ParamVector. The
MCMC estimator returns the posterior-mean parameter vector, which is what the
stride contract can reuse between refits; full posterior-mean-of-forecast
averaging is available through run_mcmc directly.
"""

from __future__ import annotations

import logging
import math
from dataclasses import replace

import numpy as np

from . import mle
from .data_io import ForecastRecord
from .mcmc import McmcConfig, run_mcmc
from .models import InitPolicy, ModelSpec, ParamVector, forecast_one

log = logging.getLogger(__name__)

__all__ = [
    "ForecastRecord",
    "rolling_forecast",
    "make_stub_estimator",
    "make_ml_estimator",
    "make_mcmc_estimator",
]


def make_stub_estimator(params: ParamVector):
    """Estimator that always returns the given parameters (tests, truth runs)."""

    def estimate(spec, window, seed):
        return params

    return estimate


def make_ml_estimator(**kwargs):
    def estimate(spec, window, seed):
        return mle.fit_ml(spec, window, seed=seed, **kwargs).params

    return estimate


def make_mcmc_estimator(cfg: McmcConfig = McmcConfig()):
    def estimate(spec, window, seed):
        return run_mcmc(spec, window, replace(cfg, seed=seed)).posterior_mean

    return estimate


def rolling_forecast(
    spec: ModelSpec,
    data,
    window: int,
    estimator,
    stride: int = 1,
    seed: int = 0,
    init: InitPolicy = InitPolicy(),
) -> list[ForecastRecord]:
    """One forecast record per out-of-sample day, ordered by date."""
    data = list(data)
    n_total = len(data)
    if window < 2:
        raise ValueError("window must hold at least 2 records")
    if n_total < window + 1:
        raise ValueError(f"need at least window+1={window + 1} records, got {n_total}")
    if stride < 1:
        raise ValueError("stride must be >= 1")

    origins = range(window - 1, n_total - 1)
    seeds = np.random.SeedSequence(seed).generate_state(len(origins))
    params: ParamVector | None = None
    records: list[ForecastRecord] = []
    for k, t in enumerate(origins):
        win = data[t - window + 1 : t + 1]
        if k % stride == 0:
            try:
                params = estimator(spec, win, int(seeds[k] % 2**31))
            except Exception as exc:  # noqa: BLE001 - failure is a flagged outcome
                log.warning("estimation failed at origin %d: %s", t, exc)
                params = None
        target_date = data[t + 1].date
        if params is None:
            records.append(
                ForecastRecord(target_date, math.nan, math.nan, spec.family.value,
                               spec.alpha, origin=t, flag="failed")
            )
            continue
        try:
            var, es = forecast_one(spec, params, win, init)
        except Exception as exc:  # noqa: BLE001
            log.warning("filtering failed at origin %d: %s", t, exc)
            records.append(
                ForecastRecord(target_date, math.nan, math.nan, spec.family.value,
                               spec.alpha, origin=t, flag="failed")
            )
            continue
        flag = "ok" if es <= var < 0.0 else "failed"
        if flag == "failed":
            log.warning("origin %d produced a crossing or non-negative forecast", t)
            var, es = math.nan, math.nan
        records.append(
            ForecastRecord(target_date, var, es, spec.family.value, spec.alpha,
                           origin=t, flag=flag)
        )
    return records
