import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from stalker_sim.paths import FinePath, Skeleton, gen_fine_path, sample_skeleton
from stalker_sim.rng import RngStream
from stalker_sim.stalker import (DriftParams, admissible_eps, build_trajectory, convergence_experiment,
                                 evolve, h_dist, h_dist_scalar, hbar, sandwich_margins, t_max)

# frozen: RK4 integration of df/dt = (1 + b - f)**(-gamma), step 1e-6
RK4_HBAR_G1_B1_T05 = 0.26794919243113346

P1 = DriftParams(1.0)


def test_hbar_examples():
    assert hbar(0.0, 2.3, P1) == 0.0
    assert hbar(1.5, 1.0, P1) == pytest.approx(1.0, abs=1e-15)
    assert hbar(0.5, 1.0, P1) == pytest.approx(RK4_HBAR_G1_B1_T05, abs=1e-12)
    assert hbar(0.5, 1.0, P1) == pytest.approx(2 - math.sqrt(3), abs=1e-15)


def test_hbar_domain():
    with pytest.raises(ValueError):
        hbar(1.6, 1.0, P1)
    with pytest.raises(ValueError):
        hbar(0.1, -0.5, P1)


def test_h_dist_examples():
    assert h_dist(0.0, 0.7, P1) == pytest.approx(0.7, abs=1e-15)
    assert h_dist(0.3, -0.3, P1) == 0.0
    assert h_dist(0.5, 1.0, P1) == pytest.approx(1 - RK4_HBAR_G1_B1_T05, abs=1e-12)
    assert h_dist(float(t_max(1.0, P1)), 1.0, P1) == 0.0
    assert h_dist(100.0, 1.0, P1) == 0.0


def test_shifted_constant():
    p = DriftParams(1.0, shift=0.04)
    assert p.c == pytest.approx(1.04)
    assert h_dist(0.5, 1.0, p) == pytest.approx(math.sqrt(2.04**2 - 1.0) - 1.04, rel=1e-14)
    with pytest.raises(ValueError):
        DriftParams(0.0)
    with pytest.raises(ValueError):
        DriftParams(1.0, shift=-1.0)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 5), st.floats(0, 5), st.floats(0, 20), st.sampled_from([0.5, 1.0, 1.6, 2.0]))
def test_h_dist_semigroup(s, t, b, gamma):
    p = DriftParams(gamma)
    lhs = h_dist(s + t, b, p)
    rhs = h_dist(t, h_dist(s, b, p), p)
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 5), st.floats(0, 5), st.floats(-1, 20), st.floats(0, 3), st.floats(0.1, 3))
def test_h_dist_bounds_and_monotonicity(t, dt, b, db, gamma):
    p = DriftParams(gamma)
    v = h_dist(t, b, p)
    assert 0 <= v <= max(b, 0.0)
    assert h_dist(t + dt, b, p) <= v + 1e-12
    assert h_dist(t, b + db, p) >= v - 1e-12
    assert h_dist_scalar(t, b, gamma, 1.0) == pytest.approx(float(v), abs=1e-12)


def _skeleton(times, levels, horizon):
    return Skeleton(0.1, np.array(times, float), np.array(levels, float), horizon)


def test_evolve_flat_skeleton():
    sk = _skeleton([0.0], [0.0], 5.0)
    assert evolve(sk, P1).tolist() == [0.0]
    tr = build_trajectory(sk, P1)
    assert np.all(tr.x_at(np.linspace(0, 5, 11)) == 0)


def test_evolve_single_up_jump():
    eps, s1, s = 0.1, 0.3, 0.02
    sk = _skeleton([0.0, s1], [0.0, eps], s1 + s)
    x = evolve(sk, P1)
    assert x[0] == 0.0
    assert x[1] == pytest.approx(eps - h_dist(s, eps, P1), abs=1e-15)


def test_reflection_identity():
    sk = sample_skeleton(0.05, 2000, RngStream(6))
    p = DriftParams(1.3)
    assert np.array_equal(evolve(sk, p, reflect=True), -evolve(sk.mirror(), p))


def _check_attraction_and_speed(tr):
    sk = tr.skeleton
    lv = sk.levels
    x, y = tr.x_at_jump_minus, tr.y_at_jump_minus
    assert np.all(lv - x >= -1e-12) and np.all(y - lv >= -1e-12)
    dur = np.append(np.diff(sk.jump_times), sk.horizon - sk.jump_times[-1])
    start = np.minimum(np.concatenate(([tr.x0], x[:-1])), lv)
    assert np.all(np.abs(x - start) <= dur + 1e-12)


@pytest.mark.parametrize("gamma", [0.5, 1.0, 2.0])
def test_attraction_and_speed_bounds(gamma):
    tr = build_trajectory(sample_skeleton(0.05, 5000, RngStream(7)), DriftParams(gamma))
    _check_attraction_and_speed(tr)


def test_monotone_coupling():
    sk = sample_skeleton(0.05, 5000, RngStream(8))
    lo = evolve(sk, P1, start=-0.5)
    hi = evolve(sk, P1, start=-0.2)
    assert np.all(lo <= hi)
    merged = np.flatnonzero(lo == hi)
    assert merged.size and np.all(lo[merged[0]:] == hi[merged[0]:])


def test_trajectory_reconstruction_matches_segment_ends():
    sk = sample_skeleton(0.05, 500, RngStream(10))
    tr = build_trajectory(sk, DriftParams(1.5))
    ends = np.append(sk.jump_times[1:], sk.horizon) * (1 - 1e-15)
    assert np.allclose(tr.x_at(ends), tr.x_at_jump_minus, atol=1e-9)
    # unsorted evaluation takes the searchsorted route and must agree
    t = np.random.default_rng(0).uniform(0, sk.horizon, 300)
    assert np.allclose(tr.x_at(t), tr.x_at(np.sort(t))[np.argsort(np.argsort(t))], atol=1e-14)


def test_phi_chain_view():
    tr = build_trajectory(sample_skeleton(0.05, 300, RngStream(11)), P1)
    phi = tr.phi()
    assert phi.shape == (301, 2) and np.all(phi >= -1e-12) and np.all(phi[0] == 0)


def test_convergence_constant_path():
    path = FinePath(1e-6, np.zeros(1_000_001), 1.0)
    r = convergence_experiment(path, 0.02, 0.01, 1.0, 1.0)
    assert r.sup_diff == 0.0
    assert r.bound == pytest.approx(0.02 * math.e)


def test_convergence_bound_random_paths():
    for i in range(5):
        path = gen_fine_path(1.0, 1e-6, RngStream(12, i))
        r = convergence_experiment(path, 0.02, 0.01, 1.0, 1.0)
        assert 0 <= r.sup_diff <= r.bound and not r.violation


def test_convergence_parameter_errors():
    path = gen_fine_path(1.0, 1e-4, RngStream(0))
    with pytest.raises(ValueError):
        convergence_experiment(path, 0.01, 0.02, 1.0, 1.0)
    with pytest.raises(ValueError):
        convergence_experiment(path, 0.2, 0.01, 1.0, 1.0)
    assert admissible_eps(1.0, 1.0) == pytest.approx(0.1 / math.e)


def test_sandwich_on_coupled_paths():
    worst = []
    for i in range(100):
        path = gen_fine_path(1.0, 1e-5, RngStream(13, i))
        worst.append(min(sandwich_margins(path, 0.02, 0.01, 1.0, 1.0)))
    assert min(worst) >= -1e-12


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32), st.floats(0.3, 3.0), st.floats(0.01, 0.2))
def test_reflection_and_bounds_property(seed, gamma, eps):
    sk = sample_skeleton(eps, 300, RngStream(seed))
    p = DriftParams(gamma)
    assert np.array_equal(evolve(sk, p, reflect=True), -evolve(sk.mirror(), p))
    _check_attraction_and_speed(build_trajectory(sk, p))
