"""Price ingestion and log-return transform."""
from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class SeriesError(ValueError):
    """Raised when price data violates the input contract."""


@dataclass(frozen=True)
class PriceSeries:
    timestamps: tuple[dt.date, ...]
    prices: np.ndarray

    def __post_init__(self):
        prices = np.asarray(self.prices, dtype=np.float64)
        if prices.ndim != 1 or len(prices) != len(self.timestamps):
            raise SeriesError("timestamps and prices must be 1-D and of equal length")
        if len(prices) < 2:
            raise SeriesError("need at least 2 prices")
        if not np.all(np.isfinite(prices)):
            raise SeriesError("non-numeric price")
        if np.any(prices <= 0):
            raise SeriesError("non-positive price")
        for a, b in zip(self.timestamps, self.timestamps[1:]):
            if not a < b:
                raise SeriesError(f"timestamps not strictly increasing at {b}")
        prices.setflags(write=False)
        object.__setattr__(self, "prices", prices)

    def __len__(self):
        return len(self.prices)


@dataclass(frozen=True)
class ReturnSeries:
    """Log returns; ``timestamps[k]`` is the date of the later price."""

    timestamps: tuple[dt.date, ...]
    returns: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.returns, dtype=np.float64)
        if r.ndim != 1 or len(r) != len(self.timestamps):
            raise SeriesError("timestamps and returns must be 1-D and of equal length")
        if not np.all(np.isfinite(r)):
            raise SeriesError("returns must be finite")
        r.setflags(write=False)
        object.__setattr__(self, "returns", r)

    def __len__(self):
        return len(self.returns)

    @classmethod
    def from_values(cls, values, start=dt.date(2000, 1, 1)) -> "ReturnSeries":
        """Wrap a bare array, stamping consecutive calendar days."""
        values = np.asarray(values, dtype=np.float64)
        stamps = tuple(start + dt.timedelta(days=k) for k in range(len(values)))
        return cls(stamps, values)


def _parse_price(text: str, lineno: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise SeriesError(f"line {lineno}: non-numeric price {text!r}") from None
    if not math.isfinite(value):
        raise SeriesError(f"line {lineno}: non-numeric price {text!r}")
    if value <= 0:
        raise SeriesError(f"line {lineno}: non-positive price {text!r}")
    return value


def load_prices(path, date_column: str = "date", price_column: str = "close") -> PriceSeries:
    """Read a ``date,close`` CSV into a date-sorted :class:`PriceSeries`.

    Extra columns are ignored. Blank rows, unparsable values, duplicate
    dates and non-positive prices raise :class:`SeriesError`; nothing is
    interpolated.
    """
    path = Path(path)
    if not path.is_file():
        raise SeriesError(f"no such file: {path}")
    rows: list[tuple[dt.date, float]] = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        for col in (date_column, price_column):
            if col not in header:
                raise SeriesError(f"missing column {col!r} in header {header}")
        di, pi = header.index(date_column), header.index(price_column)
        for lineno, row in enumerate(reader, start=2):
            if not any(cell.strip() for cell in row):
                raise SeriesError(f"line {lineno}: blank row")
            raw_date = row[di].strip() if di < len(row) else ""
            raw_price = row[pi].strip() if pi < len(row) else ""
            if not raw_date or not raw_price:
                raise SeriesError(f"line {lineno}: blank field")
            try:
                day = dt.date.fromisoformat(raw_date)
            except ValueError:
                raise SeriesError(f"line {lineno}: unparsable date {raw_date!r}") from None
            rows.append((day, _parse_price(raw_price, lineno)))

    if len(rows) < 2:
        raise SeriesError(f"need at least 2 rows, found {len(rows)}")
    rows.sort(key=lambda item: item[0])
    for (a, _), (b, _) in zip(rows, rows[1:]):
        if a == b:
            raise SeriesError(f"duplicate date {a.isoformat()}")
    return PriceSeries(tuple(d for d, _ in rows), np.array([p for _, p in rows]))


def to_log_returns(prices: PriceSeries) -> ReturnSeries:
    p = prices.prices
    return ReturnSeries(prices.timestamps[1:], np.diff(np.log(p)))


def write_prices(path, timestamps, prices) -> None:
    """Write a price path in the schema :func:`load_prices` reads."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date", "close"])
        for day, price in zip(timestamps, prices):
            writer.writerow([day.isoformat(), repr(float(price))])
