"""Price-series ingestion, daily averaging, winsorising and OU maximum likelihood."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from datetime import date, datetime
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .optim import golden_section_max

DAYS_PER_YEAR = 365.25
SECONDS_PER_DAY = 86_400.0


class DataError(ValueError):
    """Input data cannot be used (malformed rows, degenerate or irregular series)."""


@dataclass(frozen=True)
class PriceSeries:
    """Prices at strictly increasing timestamps.

    ``interval`` is the nominal sampling interval in seconds (900 for
    quarter-hourly data, 86400 for daily data).
    """

    timestamps: np.ndarray
    values: np.ndarray
    interval: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype="datetime64[s]")
        vals = np.asarray(self.values, dtype=float)
        if ts.shape != vals.shape or ts.ndim != 1:
            raise DataError("timestamps and values must be 1-d arrays of equal length")
        if np.any(~np.isfinite(vals)):
            raise DataError("series contains missing or non-finite values")
        if len(ts) > 1 and np.any(np.diff(ts).astype(np.int64) <= 0):
            raise DataError("timestamps must be strictly increasing")
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return len(self.values)


def _parse_time(text: str) -> np.datetime64:
    t = datetime.fromisoformat(text.strip().replace("Z", "+00:00"))
    # keep the wall-clock time so days follow the market's local calendar
    return np.datetime64(t.replace(tzinfo=None), "s")


def read_price_csv(path: Union[str, Path], delimiter: str = ",", interval: Optional[float] = None) -> PriceSeries:
    """Read ``timestamp, price`` rows; a non-numeric first row is treated as a header.

    Timestamps are ISO-8601; any UTC offset is dropped so days are local
    calendar days. Raises :class:`DataError` naming the first bad row.
    """
    times, prices = [], []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh, delimiter=delimiter), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) < 2:
                raise DataError(f"row {lineno}: expected two columns, got {len(row)}")
            try:
                value = float(row[1])
            except ValueError:
                if lineno == 1:
                    continue
                raise DataError(f"row {lineno}: price {row[1]!r} is not a number") from None
            try:
                stamp = _parse_time(row[0])
            except ValueError:
                raise DataError(f"row {lineno}: timestamp {row[0]!r} is not ISO-8601") from None
            times.append(stamp)
            prices.append(value)
    if not prices:
        raise DataError(f"{path}: no data rows")
    ts = np.array(times, dtype="datetime64[s]")
    order = np.argsort(ts, kind="stable")
    ts, vals = ts[order], np.array(prices)[order]
    if np.any(np.diff(ts).astype(np.int64) == 0):
        raise DataError("duplicate timestamps")
    if interval is None:
        interval = float(np.median(np.diff(ts).astype(np.int64))) if len(ts) > 1 else SECONDS_PER_DAY
    return PriceSeries(ts, vals, interval, {"source": str(path)})


def write_price_csv(path: Union[str, Path], series: PriceSeries) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp", "price"])
        for t, v in zip(series.timestamps, series.values):
            w.writerow([str(t), repr(float(v))])


def daily_average(series: PriceSeries, min_coverage: float = 0.5) -> PriceSeries:
    """Arithmetic mean per calendar day.

    A day is kept when at least ``min_coverage`` of its nominal slots are
    present; other days and days without observations are dropped and
    counted in ``meta``.
    """
    if len(series) == 0:
        raise DataError("empty series")
    days = series.timestamps.astype("datetime64[D]")
    uniq, start, counts = np.unique(days, return_index=True, return_counts=True)
    sums = np.add.reduceat(series.values, start)
    slots = max(1, int(round(SECONDS_PER_DAY / series.interval))) if series.interval < SECONDS_PER_DAY else 1
    keep = counts >= min_coverage * slots
    span = int((uniq[-1] - uniq[0]).astype(np.int64)) + 1
    meta = dict(series.meta)
    meta.update(days_kept=int(keep.sum()), days_sparse=int((~keep).sum()),
                days_empty=span - len(uniq), min_coverage=min_coverage, slots_per_day=slots)
    return PriceSeries(uniq[keep].astype("datetime64[s]"), sums[keep] / counts[keep], SECONDS_PER_DAY, meta)


def truncate(series: PriceSeries, lo: float, hi: float) -> PriceSeries:
    """Winsorise values into ``[lo, hi]``."""
    if not lo < hi:
        raise ValueError(f"truncation bounds must satisfy lo < hi, got {lo}, {hi}")
    meta = dict(series.meta)
    meta.update(truncation=(lo, hi), n_clipped=int(np.sum((series.values < lo) | (series.values > hi))))
    return PriceSeries(series.timestamps, np.clip(series.values, lo, hi), series.interval, meta)


@dataclass(frozen=True)
class OuFit:
    theta: float
    mu: float
    sigma: float
    loglik: float
    n: int
    dt: float
    time_unit: str
    truncation: Optional[tuple] = None
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def ou_loglik(x: np.ndarray, dt: float, theta: float, mu: float, sigma: float) -> float:
    """Exact conditional Gaussian log-likelihood of consecutive observations."""
    a = math.exp(-theta * dt)
    var = sigma ** 2 * (-math.expm1(-2.0 * theta * dt)) / (2.0 * theta)
    resid = x[1:] - mu - a * (x[:-1] - mu)
    n = len(resid)
    return float(-0.5 * n * math.log(2.0 * math.pi * var) - 0.5 * np.sum(resid ** 2) / var)


def _profile(x0: np.ndarray, x1: np.ndarray, theta: float, dt: float) -> tuple[float, float, float]:
    """Maximise over ``mu`` and ``sigma`` for fixed ``theta``; returns ``(loglik, mu, sigma)``."""
    a = math.exp(-theta * dt)
    one_minus_a = -math.expm1(-theta * dt)
    mu = float(np.mean(x1 - a * x0)) / one_minus_a
    resid = x1 - mu - a * (x0 - mu)
    v = float(np.mean(resid ** 2))
    n = len(resid)
    if v <= 0:
        return -math.inf, mu, 0.0
    sigma = math.sqrt(2.0 * theta * v / -math.expm1(-2.0 * theta * dt))
    return -0.5 * n * (math.log(2.0 * math.pi * v) + 1.0), mu, sigma


def fit_ou_mle(data: Union[PriceSeries, Sequence[float], np.ndarray], dt: float,
               time_unit: str = "year", theta_bounds: tuple = (1e-3, 1e4),
               spacing_rtol: float = 1e-6) -> OuFit:
    """Maximum likelihood OU fit to equally spaced observations.

    ``dt`` is the spacing in ``time_unit``; the search range for ``theta``
    is given per year and converted. The profile likelihood in ``log theta``
    is scanned on a grid and refined by golden section.
    """
    if time_unit not in ("year", "day"):
        raise ValueError("time_unit must be 'year' or 'day'")
    if not dt > 0:
        raise ValueError("dt must be positive")
    meta, trunc = {}, None
    if isinstance(data, PriceSeries):
        if len(data) > 2:
            gaps = np.diff(data.timestamps).astype(np.int64).astype(float)
            if np.max(np.abs(gaps - gaps[0])) > spacing_rtol * gaps[0]:
                raise DataError("observations are not equally spaced")
        meta = dict(data.meta)
        trunc = meta.get("truncation")
        x = data.values
    else:
        x = np.asarray(data, dtype=float)
    if len(x) < 30:
        raise DataError(f"need at least 30 observations, got {len(x)}")
    if np.ptp(x) == 0:
        raise DataError("series has zero variance")
    per = 1.0 if time_unit == "year" else 1.0 / DAYS_PER_YEAR
    lo, hi = math.log(theta_bounds[0] * per), math.log(theta_bounds[1] * per)
    x0, x1 = x[:-1], x[1:]
    f = lambda u: _profile(x0, x1, math.exp(u), dt)[0]
    grid = np.linspace(lo, hi, 161)
    vals = np.array([f(u) for u in grid])
    i = int(np.argmax(vals))
    u_best, _ = golden_section_max(f, grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)], 1e-10)
    theta = math.exp(u_best)
    ll, mu, sigma = _profile(x0, x1, theta, dt)
    meta["theta_at_bound"] = bool(i in (0, len(grid) - 1))
    return OuFit(theta, mu, sigma, ll, len(x), dt, time_unit, trunc, meta)


def simulate_ou_series(theta: float, mu: float, sigma: float, dt: float, n: int,
                       seed: int, x0: Optional[float] = None,
                       start: Union[str, date] = "2012-06-01") -> PriceSeries:
    """Exact OU samples at spacing ``dt`` (in the parameters' time unit), stamped one per day."""
    rng = np.random.default_rng(seed)
    a = math.exp(-theta * dt)
    sd = sigma * math.sqrt(-math.expm1(-2.0 * theta * dt) / (2.0 * theta))
    x = np.empty(n)
    x[0] = mu + sigma / math.sqrt(2.0 * theta) * rng.standard_normal() if x0 is None else x0
    eps = rng.standard_normal(n - 1)
    for k in range(1, n):
        x[k] = mu + a * (x[k - 1] - mu) + sd * eps[k - 1]
    ts = np.datetime64(str(start), "D") + np.arange(n)
    return PriceSeries(ts.astype("datetime64[s]"), x, SECONDS_PER_DAY, {"synthetic": True, "seed": seed})
