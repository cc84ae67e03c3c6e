import datetime as dt

import numpy as np
import pytest

from tailrisk.data_io import DailyRecord, IntradayDay
from tailrisk.mle import CandidateBox
from tailrisk.models import ModelFamily, ParamVector


def make_day(prices, date=dt.date(2021, 3, 1), minutes=None, highs=None, lows=None):
    prices = np.asarray(prices, dtype=float)
    if minutes is None:
        minutes = np.arange(prices.size)
    highs = prices if highs is None else np.asarray(highs, dtype=float)
    lows = prices if lows is None else np.asarray(lows, dtype=float)
    return IntradayDay(date, np.asarray(minutes), prices, highs, lows)


def make_records(returns, measures=None, start=dt.date(2020, 1, 1)):
    returns = np.asarray(returns, dtype=float)
    if measures is None:
        measures = np.abs(returns)
    return [
        DailyRecord(start + dt.timedelta(days=i), float(returns[i]), float(measures[i]))
        for i in range(returns.size)
    ]


def random_valid_params(family: ModelFamily, rng: np.random.Generator) -> ParamVector:
    """Random point inside the constraint region, roughly data-scaled."""
    box = dict()
    for name, lo, hi in CandidateBox.for_family(family).bounds:
        box[name] = float(rng.uniform(lo, hi))
    while True:
        beta1 = float(rng.uniform(-0.6, -0.01))
        beta2 = float(rng.uniform(0.2, 0.95))
        phi = box.get("phi", 0.0)
        if abs(beta2 + beta1 * phi) < 0.98:
            break
    fields = dict(beta0=float(rng.uniform(-0.2, -0.005)), beta1=beta1, beta2=beta2, **box)
    if "gamma2" in fields:
        fields["gamma2"] = float(rng.uniform(0.0, 0.9))
    return ParamVector(**{k: v for k, v in fields.items() if k in family.param_names})


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
