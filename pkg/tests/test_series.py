import datetime as dt
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wvar.series import PriceSeries, SeriesError, load_prices, to_log_returns, write_prices


def _csv(tmp_path, text, name="p.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def _prices(values):
    start = dt.date(2020, 1, 1)
    stamps = tuple(start + dt.timedelta(days=k) for k in range(len(values)))
    return PriceSeries(stamps, np.asarray(values, dtype=float))


def test_load_two_rows(tmp_path):
    p = load_prices(_csv(tmp_path, "date,close\n2020-01-01,100\n2020-01-02,105\n"))
    assert len(p) == 2
    assert p.timestamps == (dt.date(2020, 1, 1), dt.date(2020, 1, 2))
    assert p.prices.tolist() == [100.0, 105.0]


def test_extra_columns_ignored(tmp_path):
    p = load_prices(_csv(tmp_path, "open,date,close,volume\n1,2020-01-01,100,5\n2,2020-01-02,101,6\n"))
    assert p.prices.tolist() == [100.0, 101.0]


def test_shuffled_dates_sorted(tmp_path):
    rows = [("2020-01-0%d" % d, 100 + d) for d in range(1, 8)]
    ordered = load_prices(_csv(tmp_path, "date,close\n" + "".join(f"{d},{p}\n" for d, p in rows), "a.csv"))
    shuffled = [rows[i] for i in (3, 0, 6, 2, 5, 1, 4)]
    got = load_prices(_csv(tmp_path, "date,close\n" + "".join(f"{d},{p}\n" for d, p in shuffled), "b.csv"))
    assert got.timestamps == ordered.timestamps
    np.testing.assert_array_equal(got.prices, ordered.prices)


@pytest.mark.parametrize("body, message", [
    ("2020-01-01,100\n2020-01-02,0\n", "non-positive price"),
    ("2020-01-01,100\n2020-01-02,-3\n", "non-positive price"),
    ("2020-01-01,100\n2020-01-02,abc\n", "non-numeric price"),
    ("2020-01-01,100\n2020-13-02,101\n", "unparsable date"),
    ("2020-01-01,100\n2020-01-01,101\n", "duplicate date"),
    ("2020-01-01,100\n", "at least 2 rows"),
    ("2020-01-01,100\n,\n2020-01-03,101\n", "blank"),
    ("2020-01-01,100\n\n2020-01-03,101\n", "blank row"),
    ("2020-01-01,100\n2020-01-02\n", "blank field"),
])
def test_load_rejects(tmp_path, body, message):
    with pytest.raises(SeriesError, match=message):
        load_prices(_csv(tmp_path, "date,close\n" + body))


def test_missing_file(tmp_path):
    with pytest.raises(SeriesError, match="no such file"):
        load_prices(tmp_path / "nope.csv")


def test_missing_column(tmp_path):
    with pytest.raises(SeriesError, match="missing column 'close'"):
        load_prices(_csv(tmp_path, "date,price\n2020-01-01,1\n2020-01-02,2\n"))


def test_log_returns_examples():
    assert to_log_returns(_prices([100, 100])).returns.tolist() == [0.0]
    r = to_log_returns(_prices([100, 105])).returns
    assert r[0] == pytest.approx(0.04879016416943205, abs=1e-15)
    r = to_log_returns(_prices([100, 105, 100])).returns
    assert r[0] == pytest.approx(-r[1], abs=1e-15)
    assert r[0] == pytest.approx(math.log(1.05), abs=1e-15)


def test_returns_carry_later_dates():
    p = _prices([1, 2, 3])
    r = to_log_returns(p)
    assert r.timestamps == p.timestamps[1:]


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(min_value=1e-3, max_value=1e6), min_size=2, max_size=200))
def test_round_trip_reproduces_prices(values):
    p = _prices(values)
    r = to_log_returns(p).returns
    rebuilt = p.prices[0] * np.exp(np.concatenate([[0.0], np.cumsum(r)]))
    np.testing.assert_allclose(rebuilt, p.prices, rtol=1e-12)


@given(st.floats(min_value=0.5, max_value=2.0), st.integers(min_value=2, max_value=60))
def test_geometric_series_gives_constant_returns(ratio, n):
    p = _prices(100.0 * ratio ** np.arange(n))
    np.testing.assert_allclose(to_log_returns(p).returns, math.log(ratio), atol=1e-12)


def test_write_then_load(tmp_path):
    p = _prices([100.0, 101.5, 99.25])
    write_prices(tmp_path / "out.csv", p.timestamps, p.prices)
    q = load_prices(tmp_path / "out.csv")
    assert q.timestamps == p.timestamps
    np.testing.assert_array_equal(q.prices, p.prices)
