import datetime as dt
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tailrisk.data_io import (
    DailyRecord,
    ForecastRecord,
    SchemaError,
    daily_returns,
    load_daily,
    load_forecasts,
    load_intraday,
    load_report,
    write_daily,
    write_forecasts,
    write_report,
)


def _write(tmp_path, text, name="in.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestLoadIntraday:
    def test_empty_file(self, tmp_path):
        assert load_intraday(_write(tmp_path, "")) == []

    def test_header_only(self, tmp_path):
        assert load_intraday(_write(tmp_path, "date,minute,price\n")) == []

    def test_one_day_echo(self, tmp_path):
        text = "date,minute,price\n2021-03-01,0,100\n2021-03-01,1,101\n2021-03-01,2,100.5\n"
        days = load_intraday(_write(tmp_path, text))
        assert len(days) == 1
        day = days[0]
        assert day.date == dt.date(2021, 3, 1)
        assert day.n_ticks == 3
        np.testing.assert_array_equal(day.minutes, [0, 1, 2])
        np.testing.assert_array_equal(day.price, [100.0, 101.0, 100.5])
        # high/low default to the price when the columns are absent
        np.testing.assert_array_equal(day.high, day.price)
        np.testing.assert_array_equal(day.low, day.price)

    def test_high_low_columns(self, tmp_path):
        text = (
            "date,minute,price,high,low\n"
            "2021-03-01,0,100,100.5,99.5\n"
            "2021-03-01,5,101,101.2,100.1\n"
        )
        day = load_intraday(_write(tmp_path, text))[0]
        np.testing.assert_array_equal(day.high, [100.5, 101.2])
        np.testing.assert_array_equal(day.low, [99.5, 100.1])

    def test_negative_price_rejected(self, tmp_path):
        text = "date,minute,price\n2021-03-01,0,100\n2021-03-01,1,-3\n"
        with pytest.raises(SchemaError, match="non-positive"):
            load_intraday(_write(tmp_path, text))

    def test_duplicate_minute_rejected(self, tmp_path):
        text = "date,minute,price\n2021-03-01,0,100\n2021-03-01,0,101\n"
        with pytest.raises(SchemaError, match="duplicate"):
            load_intraday(_write(tmp_path, text))

    def test_short_day_dropped_with_warning(self, tmp_path, caplog):
        text = (
            "date,minute,price\n"
            "2021-03-01,0,100\n"
            "2021-03-02,0,100\n2021-03-02,1,101\n"
        )
        with caplog.at_level("WARNING"):
            days = load_intraday(_write(tmp_path, text))
        assert [d.date for d in days] == [dt.date(2021, 3, 2)]
        assert any("2021-03-01" in m for m in caplog.messages)

    def test_unsorted_rows_are_sorted(self, tmp_path):
        text = "date,minute,price\n2021-03-01,5,101\n2021-03-01,0,100\n"
        day = load_intraday(_write(tmp_path, text))[0]
        np.testing.assert_array_equal(day.minutes, [0, 5])

    def test_bad_header(self, tmp_path):
        with pytest.raises(SchemaError, match="header"):
            load_intraday(_write(tmp_path, "day,minute,price\n"))


class TestDailyReturns:
    def test_equal_prices_zero(self):
        closes = [(dt.date(2020, 1, 1), 100.0), (dt.date(2020, 1, 2), 100.0)]
        assert daily_returns(closes)[0][1] == 0.0

    def test_log_identity(self):
        closes = [(dt.date(2020, 1, 1), 100.0), (dt.date(2020, 1, 2), 100.0 * math.e)]
        assert daily_returns(closes)[0][1] == pytest.approx(1.0, abs=1e-15)

    def test_known_values(self):
        # independent high-precision evaluation of the two log ratios
        closes = [
            (dt.date(2020, 1, 1), 100.0),
            (dt.date(2020, 1, 2), 102.0),
            (dt.date(2020, 1, 3), 99.0),
        ]
        out = daily_returns(closes)
        assert out[0][1] == pytest.approx(0.01980262729617973, abs=1e-15)
        assert out[1][1] == pytest.approx(-0.02985296314968116, abs=1e-15)
        assert [d for d, _ in out] == [dt.date(2020, 1, 2), dt.date(2020, 1, 3)]

    def test_too_few(self):
        with pytest.raises(ValueError):
            daily_returns([(dt.date(2020, 1, 1), 100.0)])

    def test_nonpositive(self):
        with pytest.raises(ValueError):
            daily_returns([(dt.date(2020, 1, 1), 100.0), (dt.date(2020, 1, 2), 0.0)])

    def test_telescoping_sum(self, rng):
        closes = [
            (dt.date(2020, 1, 1) + dt.timedelta(days=i), float(c))
            for i, c in enumerate(100.0 * np.exp(np.cumsum(rng.normal(0, 0.02, 300))))
        ]
        rets = [r for _, r in daily_returns(closes)]
        assert sum(rets) == pytest.approx(math.log(closes[-1][1] / closes[0][1]), abs=1e-12)


class TestDailyPersistence:
    def test_round_trip(self, tmp_path):
        records = [
            DailyRecord(dt.date(2020, 1, 1), 0.0123456789012345, 0.1),
            DailyRecord(dt.date(2020, 1, 2), -1e-17, 2.2250738585072014e-308),
            DailyRecord(dt.date(2020, 1, 3), 0.1 + 0.2, 0.3),
        ]
        path = tmp_path / "daily.csv"
        write_daily(records, path)
        assert load_daily(path) == records

    def test_header_mismatch(self, tmp_path):
        with pytest.raises(SchemaError):
            load_daily(_write(tmp_path, "date,ret,measure\n"))

    def test_negative_measure_rejected(self, tmp_path):
        text = "date,return,measure\n2020-01-01,0.0,-0.5\n"
        with pytest.raises(ValueError):
            load_daily(_write(tmp_path, text))

    def test_dates_must_increase(self, tmp_path):
        text = "date,return,measure\n2020-01-02,0.0,0.1\n2020-01-01,0.0,0.1\n"
        with pytest.raises(SchemaError, match="increasing"):
            load_daily(_write(tmp_path, text))

    @settings(max_examples=50, deadline=None)
    @given(
        ret=st.floats(allow_nan=False, allow_infinity=False, width=64),
        measure=st.floats(min_value=0, allow_nan=False, allow_infinity=False, width=64),
    )
    def test_round_trip_any_float(self, tmp_path_factory, ret, measure):
        path = tmp_path_factory.mktemp("rt") / "rt.csv"
        write_daily([DailyRecord(dt.date(2020, 1, 1), ret, measure)], path)
        rec = load_daily(path)[0]
        assert rec.ret == ret and rec.measure == measure


class TestForecastPersistence:
    def _records(self):
        return [
            ForecastRecord(dt.date(2020, 1, 1), -1.234567890123456, -1.5, "re-es-caviar-exp", 0.01),
            ForecastRecord(dt.date(2020, 1, 2), math.nan, math.nan, "re-es-caviar-exp", 0.01,
                           flag="failed"),
            ForecastRecord(dt.date(2020, 1, 3), -0.9, -1.0000000000000002, "re-es-caviar-exp", 0.01),
        ]

    def test_round_trip(self, tmp_path):
        path = tmp_path / "f.csv"
        write_forecasts(self._records(), path)
        loaded = load_forecasts(path)
        for orig, got in zip(self._records(), loaded):
            assert got.date == orig.date and got.model == orig.model
            assert got.alpha == orig.alpha and got.flag == orig.flag
            if orig.ok:
                assert got.var == orig.var and got.es == orig.es

    def test_missing_es_column(self, tmp_path):
        text = "date,var,model,alpha\n2020-01-01,-1.0,m,0.01\n"
        with pytest.raises(SchemaError):
            load_forecasts(_write(tmp_path, text))

    def test_crossing_forecast_rejected(self, tmp_path):
        text = "date,var,es,model,alpha\n2020-01-01,-1.5,-1.0,m,0.01\n"
        with pytest.raises(SchemaError):
            load_forecasts(_write(tmp_path, text))

    def test_ok_invariant_enforced(self):
        with pytest.raises(ValueError):
            ForecastRecord(dt.date(2020, 1, 1), 0.5, 0.4, "m", 0.01)


class TestReport:
    def test_field_echo(self, tmp_path):
        path = tmp_path / "report.json"
        write_report({"vrate": 0.0123, "nested": {"stat": 1.5}}, path)
        assert '"vrate": 0.0123' in path.read_text()
        assert load_report(path)["vrate"] == 0.0123

    def test_non_finite_becomes_null(self, tmp_path):
        path = tmp_path / "report.json"
        write_report({"stat": math.inf, "p": math.nan, "arr": np.array([1.0, 2.0])}, path)
        doc = load_report(path)
        assert doc["stat"] is None and doc["p"] is None and doc["arr"] == [1.0, 2.0]
