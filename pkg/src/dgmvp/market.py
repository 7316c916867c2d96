"""Price series ingestion, covariance estimation and random instances."""
from __future__ import annotations

import csv
import datetime as dt
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np


class MarketDataError(ValueError):
    pass


class MissingTickerError(MarketDataError):
    pass


class RaggedDatesError(MarketDataError):
    pass


class PriceParseError(MarketDataError):
    pass


class InsufficientDataError(MarketDataError):
    pass


@dataclass(frozen=True)
class PriceSeries:
    ticker: str
    dates: tuple[str, ...]
    prices: np.ndarray

    def __post_init__(self):
        prices = np.asarray(self.prices, dtype=float)
        if prices.shape != (len(self.dates),):
            raise RaggedDatesError(f"{self.ticker}: {len(self.dates)} dates but {prices.size} prices")
        if np.any(~np.isfinite(prices)) or np.any(prices <= 0):
            raise PriceParseError(f"{self.ticker}: prices must be finite and strictly positive")
        if any(a >= b for a, b in zip(self.dates, self.dates[1:])):
            raise RaggedDatesError(f"{self.ticker}: dates are not strictly increasing")
        object.__setattr__(self, "prices", prices)

    def __len__(self) -> int:
        return len(self.dates)


@dataclass(frozen=True)
class CovarianceMatrix:
    tickers: tuple[str, ...]
    sigma: np.ndarray
    # universe positions this instance was drawn from, if any
    subset: tuple[int, ...] | None = field(default=None, compare=False)

    def __post_init__(self):
        sigma = np.array(self.sigma, dtype=float)
        if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
            raise MarketDataError(f"covariance must be square, got shape {sigma.shape}")
        if len(self.tickers) != sigma.shape[0]:
            raise MarketDataError("ticker count does not match covariance dimension")
        check_covariance(sigma)
        sigma.setflags(write=False)
        object.__setattr__(self, "sigma", sigma)

    def __eq__(self, other):
        if not isinstance(other, CovarianceMatrix):
            return NotImplemented
        return self.tickers == other.tickers and np.array_equal(self.sigma, other.sigma)

    __hash__ = None

    @property
    def dim(self) -> int:
        return self.sigma.shape[0]

    def to_json(self) -> str:
        return json.dumps({"tickers": list(self.tickers), "sigma": self.sigma.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "CovarianceMatrix":
        data = json.loads(text)
        return cls(tuple(data["tickers"]), np.array(data["sigma"], dtype=float))

    @classmethod
    def from_array(cls, sigma, tickers: Sequence[str] | None = None) -> "CovarianceMatrix":
        sigma = np.asarray(sigma, dtype=float)
        if tickers is None:
            tickers = [f"A{i}" for i in range(sigma.shape[0])]
        return cls(tuple(tickers), sigma)

    def normalized(self) -> "CovarianceMatrix":
        """Rescale so the mean diagonal entry is one; the argmin is unchanged."""
        scale = float(np.mean(np.diag(self.sigma)))
        if scale <= 0:
            return self
        return CovarianceMatrix(self.tickers, self.sigma / scale, self.subset)


def check_covariance(sigma: np.ndarray, tol: float = 1e-9) -> None:
    if not np.array_equal(sigma, sigma.T):
        raise MarketDataError("covariance matrix is not symmetric")
    if np.any(np.diag(sigma) < 0):
        raise MarketDataError("covariance matrix has a negative diagonal entry")
    if sigma.size:
        smallest = np.linalg.eigvalsh(sigma)[0]
        if smallest < -tol * max(np.trace(sigma), 1.0):
            raise MarketDataError(f"covariance matrix is not PSD (smallest eigenvalue {smallest:g})")


def load_prices(path: str | Path, tickers: Sequence[str]) -> list[PriceSeries]:
    """Read ``date,<ticker>,...`` CSV columns, keeping only dates every ticker has.

    Blank cells mark a missing day for that ticker; such rows are dropped from
    every returned series.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise PriceParseError(f"{path}: empty file") from None
        if not header or header[0].strip().lower() != "date":
            raise PriceParseError(f"{path}: first column must be 'date'")
        columns = [h.strip() for h in header]
        missing = [t for t in tickers if t not in columns]
        if missing:
            raise MissingTickerError(f"{path}: tickers not in file: {', '.join(missing)}")
        col = {t: columns.index(t) for t in tickers}

        dates: list[str] = []
        rows: list[list[float]] = []
        for lineno, row in enumerate(reader, start=2):
            if not row or not any(cell.strip() for cell in row):
                continue
            if len(row) != len(columns):
                raise RaggedDatesError(f"{path}:{lineno}: expected {len(columns)} cells, got {len(row)}")
            date = row[0].strip()
            try:
                dt.date.fromisoformat(date)
            except ValueError:
                raise PriceParseError(f"{path}:{lineno}: bad date {date!r}") from None
            values = []
            for t in tickers:
                cell = row[col[t]].strip()
                if cell == "":
                    values.append(np.nan)
                    continue
                try:
                    values.append(float(cell))
                except ValueError:
                    raise PriceParseError(f"{path}:{lineno}: non-numeric price {cell!r} for {t}") from None
            dates.append(date)
            rows.append(values)

    if any(a >= b for a, b in zip(dates, dates[1:])):
        raise RaggedDatesError(f"{path}: dates are not strictly increasing")
    table = np.array(rows, dtype=float).reshape(len(rows), len(tickers))
    keep = ~np.isnan(table).any(axis=1)
    shared = tuple(d for d, k in zip(dates, keep) if k)
    return [PriceSeries(t, shared, table[keep, j]) for j, t in enumerate(tickers)]


def compute_covariance(series: Sequence[PriceSeries], returns: bool = False) -> CovarianceMatrix:
    """Unbiased sample covariance of price levels (or of simple returns)."""
    if not series:
        raise InsufficientDataError("no series given")
    dates = series[0].dates
    for s in series[1:]:
        if s.dates != dates:
            raise RaggedDatesError(f"{s.ticker} is not aligned with {series[0].ticker}")
    data = np.vstack([s.prices for s in series])
    if returns:
        data = data[:, 1:] / data[:, :-1] - 1.0
    if data.shape[1] < 2:
        raise InsufficientDataError(f"need at least 2 observations, got {data.shape[1]}")
    centred = data - data.mean(axis=1, keepdims=True)
    sigma = centred @ centred.T / (data.shape[1] - 1)
    sigma = 0.5 * (sigma + sigma.T)
    return CovarianceMatrix(tuple(s.ticker for s in series), sigma)


def random_instance(
    rng: np.random.Generator, universe: Sequence[PriceSeries], n: int, returns: bool = False
) -> CovarianceMatrix:
    if n > len(universe):
        raise MarketDataError(f"cannot draw {n} assets from a universe of {len(universe)}")
    if n < 1:
        raise MarketDataError("n must be positive")
    if n == len(universe):
        subset = tuple(range(n))
    else:
        subset = tuple(sorted(int(i) for i in rng.choice(len(universe), size=n, replace=False)))
    cov = compute_covariance([universe[i] for i in subset], returns=returns)
    return CovarianceMatrix(cov.tickers, cov.sigma, subset)


def synthetic_universe(
    rng: np.random.Generator, size: int = 32, days: int = 100, start: str = "2023-03-01"
) -> list[PriceSeries]:
    """Correlated geometric random walks standing in for a basket of equities."""
    n_factors = 3
    loadings = rng.normal(0.0, 0.012, size=(size, n_factors))
    idio = rng.uniform(0.005, 0.02, size=size)
    shocks = rng.normal(size=(days - 1, n_factors)) @ loadings.T + rng.normal(size=(days - 1, size)) * idio
    drift = rng.normal(0.0003, 0.0005, size=size)
    start_prices = rng.uniform(20.0, 300.0, size=size)
    log_paths = np.vstack([np.zeros(size), np.cumsum(shocks + drift, axis=0)])
    prices = start_prices * np.exp(log_paths)

    first = dt.date.fromisoformat(start)
    dates = []
    day = first
    while len(dates) < days:
        if day.weekday() < 5:
            dates.append(day.isoformat())
        day += dt.timedelta(days=1)
    return [PriceSeries(f"SYN{i:02d}", tuple(dates), prices[:, i]) for i in range(size)]


def factor_model_covariance(rng: np.random.Generator, n: int, factors: int = 2) -> CovarianceMatrix:
    """Random SPD matrix ``F F^T + diag(eps)`` with unit mean diagonal."""
    f = rng.normal(size=(n, factors))
    eps = rng.uniform(0.1, 1.0, size=n)
    sigma = f @ f.T + np.diag(eps)
    sigma = 0.5 * (sigma + sigma.T)
    sigma /= np.mean(np.diag(sigma))
    sigma = 0.5 * (sigma + sigma.T)
    return CovarianceMatrix.from_array(sigma)


def write_prices_csv(path: str | Path, series: Sequence[PriceSeries]) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date", *(s.ticker for s in series)])
        for i, date in enumerate(series[0].dates):
            writer.writerow([date, *(repr(float(s.prices[i])) for s in series)])
