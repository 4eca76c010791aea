import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stalker_sim.exit_time import (exit_laplace, exit_survival, exit_tail_bounds, fine_grid_exit_times,
                                   quantile_table, sample_exit_time, tau_from_uniform, tau_quantile,
                                   unit_exit_cdf, unit_exit_density, unit_exit_survival)
from stalker_sim.rng import RngStream

# frozen from the bridge-corrected fine-grid oracle (fine_grid_exit_times, dt=1e-3, 1e5 walks)
FINE_GRID_TAU2 = 1.6675
FINE_GRID_SURV2 = 0.10728


def test_series_branches_agree_at_split():
    t = np.array([0.3, 0.6, 0.9])
    from stalker_sim.exit_time import _image_cdf, _theta_survival
    assert np.allclose(_image_cdf(t, 1e-16), 1 - _theta_survival(t, 1e-16), atol=1e-14)


def test_density_integrates_to_cdf():
    from scipy import integrate
    val, _ = integrate.quad(lambda t: unit_exit_density(t), 0, 1.5, limit=200)
    assert val == pytest.approx(float(unit_exit_cdf(1.5)), abs=1e-10)


def test_moments_from_series():
    from scipy import integrate
    m1, _ = integrate.quad(lambda t: unit_exit_survival(t), 0, 60, limit=200)
    m2, _ = integrate.quad(lambda t: 2 * t * unit_exit_survival(t), 0, 60, limit=200)
    assert m1 == pytest.approx(1.0, abs=1e-9)
    assert m2 == pytest.approx(5 / 3, abs=1e-9)


def test_mean_exit_time(stream):
    s = sample_exit_time(0.1, stream, size=100_000)
    assert s.mean() == pytest.approx(0.01, rel=0.02)
    assert s.min() > 0


def test_second_moment_matches_fine_grid(stream):
    tau = sample_exit_time(1.0, stream, size=100_000)
    assert (tau**2).mean() == pytest.approx(FINE_GRID_TAU2, rel=0.03)
    assert (tau**2).mean() == pytest.approx(5 / 3, rel=0.03)


def test_tail_probability_at_eps_half(stream):
    s = sample_exit_time(0.5, stream, size=100_000)
    assert (s > 0.5).mean() == pytest.approx(0.108, abs=0.005)
    assert float(exit_survival(0.5, 0.5)) == pytest.approx(FINE_GRID_SURV2, abs=0.003)


def test_tail_bounds_values():
    lo, hi = exit_tail_bounds(0.5)
    assert hi == pytest.approx(0.10797, abs=1e-5)
    assert lo <= hi
    assert lo / hi == pytest.approx(1 - math.exp(-math.pi**2 / 0.5) / 3, rel=1e-14)
    lo, hi = exit_tail_bounds(1e-3)
    assert hi < 1e-300 and lo <= hi


@pytest.mark.parametrize("eps", [0.3, 0.5, 0.8])
def test_tail_bounds_sandwich_empirical_survival(eps):
    s = sample_exit_time(eps, RngStream(3, int(eps * 10)), size=100_000)
    p = (s > eps).mean()
    ci = 3 * math.sqrt(p * (1 - p) / s.size)
    lo, hi = exit_tail_bounds(eps)
    assert p + ci >= lo and p - ci <= hi
    exact = float(exit_survival(eps, eps))
    assert lo - 1e-15 <= exact <= hi + 1e-15


def test_laplace_closed_form():
    assert exit_laplace(1.0) == pytest.approx(1 / math.cosh(math.sqrt(2)), rel=1e-15)
    assert exit_laplace(1e-12) == pytest.approx(1.0, abs=1e-9)
    with pytest.raises(ValueError):
        exit_laplace(0.0)


def test_laplace_matches_exact_sampler(stream):
    tau = sample_exit_time(1.0, stream, size=200_000)
    assert np.exp(-tau).mean() == pytest.approx(exit_laplace(1.0), abs=0.003)


def test_quantile_table_inverts_cdf():
    u = np.concatenate((np.logspace(-11, -1, 30), np.linspace(0.02, 0.98, 97), 1 - np.logspace(-12, -1, 30)))
    # below the first logit knot (u ~ 1.9e-12) draws are clipped to that knot
    q = tau_quantile(u)
    assert np.all(np.diff(q[np.argsort(u)]) >= 0)
    err = np.abs(unit_exit_cdf(q) - u) / np.minimum(u, 1 - u)
    assert err.max() < 1e-4


def test_quantile_table_monotone_and_readonly():
    t = quantile_table()
    n1 = int(t[4])
    assert np.all(np.diff(t[6:6 + n1]) > 0)
    assert np.all(np.diff(t[6 + n1:]) > 0)
    with pytest.raises(ValueError):
        t[0] = 1.0


def test_jit_lookup_matches_vectorised():
    t = quantile_table()
    u = np.random.default_rng(0).random(2000)
    u[:4] = [0.0, 1e-300, 0.05, 0.95]
    a = np.array([tau_from_uniform(x, t) for x in u])
    assert np.allclose(a, tau_quantile(u), rtol=1e-14, atol=0)


def test_scale_covariance():
    a = sample_exit_time(1.0, RngStream(8), size=1000)
    b = sample_exit_time(0.37, RngStream(8), size=1000)
    assert np.array_equal(b, 0.37**2 * a)


def test_fine_grid_oracle_smoke():
    tau = fine_grid_exit_times(2000, 1e-3, RngStream(1))
    assert np.isfinite(tau).all()
    assert tau.mean() == pytest.approx(1.0, abs=0.08)


@settings(max_examples=40, deadline=None)
@given(st.floats(1e-3, 5.0))
def test_tail_bounds_ordered(eps):
    lo, hi = exit_tail_bounds(eps)
    assert 0 <= lo <= hi
    if eps < 1:
        assert hi < 1


@settings(max_examples=40, deadline=None)
@given(st.floats(1e-3, 50.0), st.floats(1e-3, 50.0))
def test_laplace_decreasing(a, b):
    if a < b:
        assert exit_laplace(a) > exit_laplace(b)
    assert 0 < exit_laplace(a) < 1


@settings(max_examples=60, deadline=None)
@given(st.floats(0.01, 20.0))
def test_cdf_plus_survival_is_one(t):
    assert unit_exit_cdf(t) + unit_exit_survival(t) == pytest.approx(1.0, abs=1e-14)
