"""Exit time of Brownian motion from a symmetric interval.

``tau`` is the first time a standard Brownian motion started at 0 leaves
``(-1, 1)``; the inter-jump time of an eps-skeleton is ``eps**2 * tau``.
The law of ``tau`` has two alternating series, one converging fast for
large ``t`` (eigenfunction expansion) and one for small ``t`` (method of
images).  Sampling inverts the CDF through two 4096-knot tables built once
by bisection on the series: one uniform in ``F`` for the bulk of the mass
and one uniform in ``logit F`` for the tails, with the exact exponential
tail beyond the last knot.
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy.special import erfc

from ._jit import njit
from .rng import RngLike, as_generator

SERIES_SPLIT = 0.6
N_KNOTS = 4096
W_LO = -27.0
W_HI = 21.0
U_LO = 0.05
U_HI = 0.95
_PI2_8 = math.pi**2 / 8.0


def _as_array(t):
    return np.atleast_1d(np.asarray(t, dtype=float))


def _image_cdf(t, tol):
    s = np.zeros_like(t)
    root = np.sqrt(2.0 * t)
    k = 0
    while True:
        term = 2.0 * erfc((2 * k + 1) / root)
        s += term if k % 2 == 0 else -term
        if np.all(term < tol):
            return s
        k += 1


def _theta_survival(t, tol):
    s = np.zeros_like(t)
    n = 0
    while True:
        m = 2 * n + 1
        term = 4.0 / (math.pi * m) * np.exp(-m * m * _PI2_8 * t)
        s += term if n % 2 == 0 else -term
        if np.all(term < tol):
            return s
        n += 1


def _image_density(t, tol):
    s = np.zeros_like(t)
    pref = 2.0 / np.sqrt(2.0 * math.pi * t**3)
    k = 0
    while True:
        m = 2 * k + 1
        term = pref * m * np.exp(-m * m / (2.0 * t))
        s += term if k % 2 == 0 else -term
        if np.all(term < tol):
            return s
        k += 1


def _theta_density(t, tol):
    s = np.zeros_like(t)
    n = 0
    while True:
        m = 2 * n + 1
        term = 0.5 * math.pi * m * np.exp(-m * m * _PI2_8 * t)
        s += term if n % 2 == 0 else -term
        if np.all(term < tol):
            return s
        n += 1


def unit_exit_cdf_survival(t, tol: float = 1e-16):
    """Return ``(P(tau <= t), P(tau > t))`` with no cancellation in either."""
    t = _as_array(t)
    F = np.zeros_like(t)
    S = np.ones_like(t)
    small = (t > 0) & (t < SERIES_SPLIT)
    large = t >= SERIES_SPLIT
    if small.any():
        F[small] = _image_cdf(t[small], tol)
        S[small] = 1.0 - F[small]
    if large.any():
        S[large] = _theta_survival(t[large], tol)
        F[large] = 1.0 - S[large]
    return F, S


def _like(t, out):
    return float(out[0]) if np.ndim(t) == 0 else out


def unit_exit_cdf(t, tol: float = 1e-16):
    return _like(t, unit_exit_cdf_survival(t, tol)[0])


def unit_exit_survival(t, tol: float = 1e-16):
    return _like(t, unit_exit_cdf_survival(t, tol)[1])


def unit_exit_density(t, tol: float = 1e-16):
    """Density of ``tau``; the series stop once every term is below ``tol``."""
    t0 = t
    t = _as_array(t)
    out = np.zeros_like(t)
    small = (t > 0) & (t < SERIES_SPLIT)
    large = t >= SERIES_SPLIT
    if small.any():
        out[small] = _image_density(t[small], tol)
    if large.any():
        out[large] = _theta_density(t[large], tol)
    return _like(t0, out)


def exit_survival(t, epsilon: float):
    """``P(sigma > t)`` for the exit time ``sigma`` of ``(-epsilon, epsilon)``."""
    return unit_exit_survival(np.asarray(t, dtype=float) / epsilon**2)


def exit_tail_bounds(epsilon: float) -> tuple[float, float]:
    """Two-term bounds on ``P(sigma > epsilon)`` from the alternating series."""
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    upper = 4.0 / math.pi * math.exp(-math.pi**2 / (8.0 * epsilon))
    lower = upper * (1.0 - math.exp(-math.pi**2 / epsilon) / 3.0)
    return lower, upper


def exit_laplace(alpha: float) -> float:
    """``E exp(-alpha * tau)`` for the unit exit time: ``1/cosh(sqrt(2 alpha))``."""
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    return 1.0 / math.cosh(math.sqrt(2.0 * alpha))


def _bisect_log_t(target, value_fn, rounds: int = 100) -> np.ndarray:
    """Solve ``value_fn(t) = target`` for increasing ``value_fn`` by bisection in ``log t``."""
    lo = np.full(target.shape, math.log(1e-3))
    hi = np.full(target.shape, math.log(100.0))
    for _ in range(rounds):
        mid = 0.5 * (lo + hi)
        below = value_fn(np.exp(mid)) < target
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return np.exp(0.5 * (lo + hi))


def _logit_cdf(t):
    F, S = unit_exit_cdf_survival(t)
    with np.errstate(divide="ignore"):
        return np.log(F) - np.log(S)


@lru_cache(maxsize=None)
def quantile_table() -> np.ndarray:
    """Packed inverse-CDF table for :func:`tau_from_uniform`.

    Layout: ``[w_lo, 1/dw, u_lo, 1/du, n_logit, n_central]`` followed by
    ``n_logit`` knots equally spaced in ``logit F`` and ``n_central`` knots
    equally spaced in ``F`` over ``[U_LO, U_HI]``.  The central part needs
    no logarithm to look up; the logit part covers both tails.
    """
    w = np.linspace(W_LO, W_HI, N_KNOTS)
    t_logit = _bisect_log_t(w, _logit_cdf)
    u = np.linspace(U_LO, U_HI, N_KNOTS)
    t_central = _bisect_log_t(u, unit_exit_cdf)
    head = [W_LO, (N_KNOTS - 1) / (W_HI - W_LO), U_LO, (N_KNOTS - 1) / (U_HI - U_LO),
            N_KNOTS, N_KNOTS]
    table = np.concatenate((head, t_logit, t_central))
    table.setflags(write=False)
    return table


@njit
def tau_from_uniform(u, table):
    """Unit exit time for one uniform ``u`` in ``[0, 1)``."""
    n1 = int(table[4])
    x = (u - table[2]) * table[3]
    if x >= 0.0 and x < table[5] - 1.0:
        j = int(x)
        f = x - j
        k = 6 + n1 + j
        return table[k] + f * (table[k + 1] - table[k])
    if u <= 0.0:
        return table[6]
    w = math.log(u / (1.0 - u))
    x = (w - table[0]) * table[1]
    if x >= n1 - 1:
        return -math.log(0.25 * math.pi * (1.0 - u)) / _PI2_8
    if x <= 0.0:
        return table[6]
    j = int(x)
    f = x - j
    k = 6 + j
    return table[k] + f * (table[k + 1] - table[k])


def tau_quantile(u):
    """Vectorised twin of :func:`tau_from_uniform` (same arithmetic)."""
    table = quantile_table()
    w_lo, inv_dw, u_lo, inv_du = table[:4]
    n1, n2 = int(table[4]), int(table[5])
    logit_knots = table[6:6 + n1]
    central_knots = table[6 + n1:]
    u = np.asarray(u, dtype=float)
    xc = (u - u_lo) * inv_du
    central = (xc >= 0.0) & (xc < n2 - 1)
    jc = np.clip(np.floor(xc), 0, n2 - 2).astype(np.int64)
    fc = xc - jc
    out_c = central_knots[jc] + fc * (central_knots[jc + 1] - central_knots[jc])
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.log(u / (1.0 - u))
        tail = -np.log(0.25 * math.pi * (1.0 - u)) / _PI2_8
    x = (w - w_lo) * inv_dw
    j = np.clip(np.floor(np.nan_to_num(x)), 0, n1 - 2).astype(np.int64)
    f = x - j
    out = logit_knots[j] + f * (logit_knots[j + 1] - logit_knots[j])
    out = np.where(x >= n1 - 1, tail, out)
    out = np.where((x <= 0.0) | (u <= 0.0), logit_knots[0], out)
    out = np.where(central, out_c, out)
    return out[()] if out.ndim == 0 else out


def sample_exit_time(epsilon: float, rng: RngLike, size=None):
    """Exact draws of the exit time of ``(-epsilon, epsilon)``.

    Draws are ``epsilon**2 * tau`` with ``tau`` taken from one uniform each,
    so for a fixed stream they scale exactly with ``epsilon**2``.
    """
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    u = as_generator(rng).random(size)
    tau = tau_quantile(u)
    if size is None:
        return float(epsilon**2 * tau)
    return epsilon**2 * tau


def fine_grid_exit_times(n: int, dt: float, rng: RngLike, half_width: float = 1.0,
                         chunk: int = 256, max_time: float = 200.0, bridge: bool = True) -> np.ndarray:
    """Exit times of ``(-half_width, half_width)`` from Gaussian random walks.

    Independent oracle for the exact sampler: ``n`` walks with step variance
    ``dt``; the exit time is the first grid time at which the walk is outside
    or, with ``bridge=True``, at which the Brownian bridge between the two
    grid values crossed a barrier (crossing probability
    ``exp(-2 a b / dt)`` for distances ``a``, ``b`` to that barrier).  The
    bridge test removes the late-detection bias of plain grid monitoring.
    Paths still inside at ``max_time`` get ``inf``.
    """
    if dt <= 0 or n < 1:
        raise ValueError("need dt > 0 and n >= 1")
    gen = as_generator(rng)
    sd = math.sqrt(dt)
    h = half_width
    out = np.full(n, np.inf)
    pos = np.zeros(n)
    active = np.arange(n)
    step0 = 0
    max_steps = int(max_time / dt)
    while active.size and step0 < max_steps:
        incr = gen.standard_normal((active.size, chunk)) * sd
        walk = pos[active, None] + np.cumsum(incr, axis=1)
        hit = np.abs(walk) >= h
        if bridge:
            prev = np.concatenate((pos[active, None], walk[:, :-1]), axis=1)
            inside = ~hit
            up = np.where(inside, (h - prev) * (h - walk), np.inf)
            down = np.where(inside, (h + prev) * (h + walk), np.inf)
            p = np.exp(-2.0 * up / dt) + np.exp(-2.0 * down / dt)
            hit |= gen.random(p.shape) < p
        any_hit = hit.any(axis=1)
        first = hit.argmax(axis=1)
        done = active[any_hit]
        out[done] = (step0 + first[any_hit] + 1) * dt
        pos[active] = walk[:, -1]
        active = active[~any_hit]
        step0 += chunk
    return out
