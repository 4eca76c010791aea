import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats as sps

from stalker_sim.phi_chain import PhiState, phi_path
from stalker_sim.rng import RngStream
from stalker_sim.stats import (SeriesRecord, autocorr, excess_kurtosis, growth_exponent,
                               recurrence_diagnostics, returns, volatility_autocorr, white_noise_band,
                               windowed_volatility)


def rec(values, times=None):
    values = np.asarray(values, dtype=float)
    return SeriesRecord(np.arange(values.size, dtype=float) if times is None else times, values)


def test_returns_examples():
    assert returns(rec([0, 3, 1])).values.tolist() == [3, -2]
    assert np.all(returns(rec(np.full(10, 4.2))).values == 0)
    with pytest.raises(ValueError):
        returns(rec([1.0]))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(-10**6, 10**6), min_size=2, max_size=50), st.integers(-10**6, 10**6))
def test_returns_shift_equivariant(xs, c):
    a = returns(rec(xs)).values
    b = returns(rec(np.array(xs) + c)).values
    assert np.array_equal(a, b)


def test_series_record_validation():
    with pytest.raises(ValueError):
        SeriesRecord(np.array([0.0, 0.0]), np.array([1.0, 2.0]))
    with pytest.raises(ValueError):
        SeriesRecord(np.arange(3.0), np.arange(4.0))


def test_kurtosis():
    g = np.random.default_rng(0)
    assert abs(excess_kurtosis(g.standard_normal(200_000))) < 0.05
    assert excess_kurtosis(g.standard_t(5, 200_000)) > 1
    x = g.laplace(size=1000)
    assert excess_kurtosis(x) == pytest.approx(sps.kurtosis(x), rel=1e-12)
    assert math.isnan(excess_kurtosis(np.ones(5)))


def test_windowed_volatility():
    r = rec(np.tile([1.0, -3.0], 150))
    v = windowed_volatility(r, 100)
    assert len(v) == 3 and np.allclose(v.values, 2.0)
    assert v.times.tolist() == [99.0, 199.0, 299.0]


def test_autocorr_lag0_and_reference():
    g = np.random.default_rng(1)
    x = g.standard_normal(500)
    a = autocorr(x, 10)
    assert a[0] == 1.0
    d = x - x.mean()
    assert a[3] == pytest.approx(np.sum(d[:-3] * d[3:]) / np.sum(d * d), rel=1e-12)


def test_white_noise_baseline():
    g = np.random.default_rng(2)
    ret = rec(g.standard_normal(100 * 2000))
    acf = volatility_autocorr(ret, 100, 100)
    assert acf.values[0] == 1.0
    band = white_noise_band(2000)
    assert np.mean(np.abs(acf.values[1:]) <= band) >= 0.95


def test_volatility_autocorr_detects_clustering():
    g = np.random.default_rng(3)
    n = 100 * 3000
    regime = np.repeat(g.choice([0.5, 2.0], size=n // 20_000), 20_000)
    ret = rec(g.standard_normal(n) * regime)
    acf = volatility_autocorr(ret, 100, 100)
    assert acf.values[100] > white_noise_band(3000)


def test_recurrence_examples():
    r = recurrence_diagnostics(rec(np.full(50, 0.5)), 1.0)
    assert r.last_exit == 49.0 and r.visit_count == 50
    v = np.linspace(0, 3, 31)
    r = recurrence_diagnostics(rec(v), 1.0)
    last = np.flatnonzero(v <= 1.0)[-1]
    assert r.visit_count == last + 1 and r.last_exit == float(last)
    with pytest.raises(ValueError):
        recurrence_diagnostics(rec([-1.0, 2.0]), 1.0)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 10), min_size=1, max_size=60), st.floats(0.01, 5), st.floats(0, 5))
def test_recurrence_monotone_in_r(vals, r, dr):
    a = recurrence_diagnostics(rec(vals), r)
    b = recurrence_diagnostics(rec(vals), r + dr)
    assert b.visit_count >= a.visit_count and b.last_exit >= a.last_exit


def test_growth_exponent_power_law():
    t = np.arange(1, 10_001, dtype=float)
    assert growth_exponent(t, 3 * t**0.5) == pytest.approx(0.5, abs=1e-9)
    assert math.isnan(growth_exponent(t, np.zeros_like(t)))


@pytest.mark.parametrize("eps", [0.05, 0.1])
def test_phi_chain_recurrence_contrast(eps):
    n_steps, r = 200_000, 1.0

    def diag(gamma, i):
        p = phi_path(PhiState(0, 0), eps, gamma, n_steps, RngStream(30, i))
        return recurrence_diagnostics(rec(p.sum(axis=1)), r)

    lo = [diag(0.5, i) for i in range(50)]
    hi = [diag(2.0, 100 + i) for i in range(50)]
    visits = sps.mannwhitneyu([d.visit_count for d in lo], [d.visit_count for d in hi],
                              alternative="greater")
    growth = sps.mannwhitneyu([d.growth_exponent for d in hi], [d.growth_exponent for d in lo],
                              alternative="greater")
    assert visits.pvalue < 0.01 and growth.pvalue < 0.01
