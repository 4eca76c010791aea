"""Series statistics: returns, tails, volatility memory, recurrence diagnostics."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SeriesRecord:
    times: np.ndarray
    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        t = np.asarray(self.times)
        v = np.asarray(self.values)
        if t.shape != v.shape or t.ndim != 1:
            raise ValueError(f"times and values must be 1-d of equal length, got {t.shape} and {v.shape}")
        if t.size > 1 and not np.all(np.diff(t) > 0):
            raise ValueError("times must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.values.size

    def rows(self):
        return zip(self.times.tolist(), self.values.tolist())


def returns(prices: SeriesRecord) -> SeriesRecord:
    """One-step differences of (logarithmic) prices, stamped at the later time."""
    if len(prices) < 2:
        raise ValueError("need at least 2 prices for returns")
    return SeriesRecord(prices.times[1:], np.diff(prices.values.astype(float)),
                        f"returns({prices.label})" if prices.label else "returns")


def excess_kurtosis(x) -> float:
    """Sample excess kurtosis ``m4 / m2**2 - 3`` (0 for a normal law); nan for constant data."""
    x = np.asarray(getattr(x, "values", x), dtype=float)
    d = x - x.mean()
    m2 = np.mean(d * d)
    if m2 == 0:
        return float("nan")
    return float(np.mean(d**4) / m2**2 - 3.0)


def windowed_volatility(ret: SeriesRecord, window: int = 100) -> SeriesRecord:
    """Mean ``|return|`` over consecutive non-overlapping windows; a trailing partial window is dropped."""
    if window < 1:
        raise ValueError("window must be >= 1")
    n = len(ret) // window
    if n < 1:
        raise ValueError(f"need at least {window} returns, got {len(ret)}")
    a = np.abs(ret.values[: n * window].astype(float)).reshape(n, window)
    return SeriesRecord(ret.times[window - 1: n * window: window], a.mean(axis=1), "volatility")


def autocorr(x, max_lag: int) -> np.ndarray:
    """Sample autocorrelation at lags ``0..max_lag`` (biased normalisation, lag 0 is 1)."""
    x = np.asarray(x, dtype=float)
    if max_lag >= x.size:
        raise ValueError(f"max_lag={max_lag} must be below the series length {x.size}")
    d = x - x.mean()
    c0 = np.dot(d, d)
    if c0 == 0:
        raise ValueError("autocorrelation of a constant series is undefined")
    return np.array([np.dot(d[: d.size - k], d[k:]) / c0 for k in range(max_lag + 1)])


def volatility_autocorr(ret: SeriesRecord, window: int = 100, max_lag: int = 100) -> SeriesRecord:
    """Autocorrelation of the windowed ``|return|`` series, indexed by lag in windows."""
    if len(ret) < 2 * window:
        raise ValueError(f"need at least {2 * window} returns for window={window}, got {len(ret)}")
    vol = windowed_volatility(ret, window)
    if max_lag >= len(vol):
        raise ValueError(f"max_lag={max_lag} needs more than {max_lag} windows, have {len(vol)}")
    acf = autocorr(vol.values, max_lag)
    return SeriesRecord(np.arange(max_lag + 1), acf, "acf")


def white_noise_band(n: int) -> float:
    """Half-width ``2/sqrt(n)`` of the band holding ~95% of white-noise autocorrelations."""
    return 2.0 / math.sqrt(n)


@dataclass(frozen=True)
class RecurrenceReport:
    r: float
    horizon: float
    last_exit: float
    visit_count: int
    growth_exponent: float


def growth_exponent(times, values, tail_fraction: float = 0.5) -> float:
    """Least-squares slope of ``log value`` against ``log time`` over the final part of the series.

    Non-positive times and values are left out of the fit; ``nan`` when
    fewer than two points remain.
    """
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    start = int(math.floor(t.size * (1.0 - tail_fraction)))
    t, v = t[start:], v[start:]
    keep = (t > 0) & (v > 0)
    if np.count_nonzero(keep) < 2 or np.ptp(t[keep]) == 0:
        return float("nan")
    return float(np.polyfit(np.log(t[keep]), np.log(v[keep]), 1)[0])


def recurrence_diagnostics(distance: SeriesRecord, r: float) -> RecurrenceReport:
    """Censored last-exit time, visit count and tail growth exponent of a distance series."""
    if not r > 0:
        raise ValueError(f"r must be positive, got {r}")
    v = distance.values.astype(float)
    if np.any(v < 0):
        raise ValueError("distance values must be non-negative")
    t = distance.times.astype(float)
    inside = v <= r
    last = float(t[np.flatnonzero(inside)[-1]]) if inside.any() else 0.0
    horizon = float(t[-1]) if t.size else 0.0
    return RecurrenceReport(float(r), horizon, last, int(np.count_nonzero(inside)),
                            growth_exponent(t, v))


__all__ = [
    "SeriesRecord", "returns", "excess_kurtosis", "windowed_volatility", "autocorr",
    "volatility_autocorr", "white_noise_band", "RecurrenceReport", "growth_exponent",
    "recurrence_diagnostics",
]
