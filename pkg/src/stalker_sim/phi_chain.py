"""The distance chain ``Phi = (B - X, Y - B)`` observed just before jumps.

One step: the skeleton jumps by +-eps (each with probability 1/2), moving
the particle along an l1 level line (or up an axis when it sits there),
then both coordinates drift towards 0 for an exit time ``sigma``.

Also here: the level-set hitting experiment of the recurrence argument,
the tube geometry, and the bounded test function used for transience.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize
from scipy.stats import norm

from ._jit import njit
from .exit_time import quantile_table, tau_from_uniform, tau_quantile, unit_exit_density
from .rng import RngLike, RngStream, as_generator, as_kernel_state, next_coin_uniform, next_uniform
from .stalker import DriftParams, h_dist, h_dist_scalar

DEFAULT_MAX_STEPS = 10_000_000
# l1 diameter ansatz constant of the tube around the bisector (gamma = 1 limit)
ANSATZ_D = (math.sqrt(65.0) - 8.0) / (2.0 * math.sqrt(2.0))


@dataclass(frozen=True)
class PhiState:
    x: float
    y: float

    def __post_init__(self):
        if not (self.x >= 0 and self.y >= 0):
            raise ValueError(f"PhiState coordinates must be non-negative, got ({self.x}, {self.y})")

    @property
    def norm1(self) -> float:
        return self.x + self.y


@dataclass(frozen=True)
class LevelSets:
    k: int

    @property
    def mid(self) -> float:
        return 4.0**self.k

    @property
    def lo(self) -> float:
        return 4.0 ** (self.k - 1)

    @property
    def hi(self) -> float:
        return 4.0 ** (self.k + 1)


# ---------------------------------------------------------------- one step

SERIES_TERMS = 10
SERIES_RADIUS = 0.05
RESYNC_EVERY = 256


@njit
def _jump(x, y, up, eps):
    if up:
        return x + eps, (y - eps if y > eps else 0.0)
    return (x - eps if x > eps else 0.0), y + eps


def series_coefficients(gamma: float) -> tuple[np.ndarray, np.ndarray]:
    """Binomial coefficients of ``(1+z)**(gamma+1)`` and ``(1-d)**(1/(gamma+1))`` in powers of ``z``, ``d``."""
    g1 = gamma + 1.0
    up = np.empty(SERIES_TERMS + 1)
    down = np.empty(SERIES_TERMS + 1)
    up[0] = down[0] = 1.0
    for n in range(1, SERIES_TERMS + 1):
        up[n] = up[n - 1] * (g1 - n + 1) / n
        down[n] = -down[n - 1] * (1.0 / g1 - n + 1) / n
    return up, down


@njit
def _series(coef, z, az):
    """Truncated binomial series; fewer terms for small ``|z|`` (dropped tail below ~1e-13)."""
    if az < 1e-4:
        n = 3
    elif az < 2e-3:
        n = 4
    elif az < 1e-2:
        n = 6
    else:
        n = SERIES_TERMS
    s = coef[n]
    for k in range(n - 1, -1, -1):
        s = s * z + coef[k]
    return s


@njit
def _carry_jump(a, A, step, c, C, g1, up_coef):
    """Move the distance ``a - c`` by ``step`` (floored at 0) and update ``A = a**g1``."""
    a2 = a + step
    if a2 <= c:
        return c, C
    z = step / a
    az = abs(z)
    if az <= SERIES_RADIUS:
        return a2, A * _series(up_coef, z, az)
    return a2, a2**g1


@njit
def _carry_drift(a, A, t, c, C, g1, down_coef):
    """Drift the distance ``a - c`` for time ``t``; ``A - g1 t`` is the new ``a**g1``."""
    if a <= c:
        return c, C
    r = A - g1 * t
    if r <= C:
        return c, C
    d = g1 * t / A
    if d <= SERIES_RADIUS:
        a2 = a * _series(down_coef, d, d)
    else:
        a2 = r ** (1.0 / g1)
    if a2 <= c:
        return c, C
    if a2 > a:
        # rounding must never let the drift push away
        a2 = a
    return a2, r


@njit
def _phi_run(x, y, eps, gamma, c, lo, hi, max_steps, st, table, up_coef, down_coef):
    """Advance until the l1 norm leaves ``(lo, hi)`` or ``max_steps`` is spent.

    Distances are carried as ``a = x + c`` together with ``A = a**(gamma+1)``
    so a step costs a few short polynomial evaluations instead of powers.
    Status: 1 hit ``<= lo``, 2 hit ``>= hi``, 3 budget.
    """
    g1 = gamma + 1.0
    C = c**g1
    e2 = eps * eps
    ax = x + c
    ay = y + c
    Ax = ax**g1
    Ay = ay**g1
    steps = 0
    while steps < max_steps:
        up, u = next_coin_uniform(st)
        t = e2 * tau_from_uniform(u, table)
        # written out rather than factored into a helper: numba leaves the helper un-inlined
        if up:
            ax, Ax = _carry_jump(ax, Ax, eps, c, C, g1, up_coef)
            ay, Ay = _carry_jump(ay, Ay, -eps, c, C, g1, up_coef)
        else:
            ax, Ax = _carry_jump(ax, Ax, -eps, c, C, g1, up_coef)
            ay, Ay = _carry_jump(ay, Ay, eps, c, C, g1, up_coef)
        ax, Ax = _carry_drift(ax, Ax, t, c, C, g1, down_coef)
        ay, Ay = _carry_drift(ay, Ay, t, c, C, g1, down_coef)
        steps += 1
        if steps % RESYNC_EVERY == 0:
            Ax = ax**g1
            Ay = ay**g1
        s = (ax - c) + (ay - c)
        if s <= lo:
            return ax - c, ay - c, steps, 1
        if s >= hi:
            return ax - c, ay - c, steps, 2
    return ax - c, ay - c, steps, 3


@njit
def _phi_trace(x, y, eps, gamma, c, st, table, up_coef, down_coef, out):
    """Fill ``out[i] = Phi_i`` with the carried-power step of :func:`_phi_run`."""
    g1 = gamma + 1.0
    C = c**g1
    e2 = eps * eps
    ax = x + c
    ay = y + c
    Ax = ax**g1
    Ay = ay**g1
    out[0, 0] = x
    out[0, 1] = y
    for i in range(1, out.shape[0]):
        up, u = next_coin_uniform(st)
        t = e2 * tau_from_uniform(u, table)
        # written out rather than factored into a helper: numba leaves the helper un-inlined
        if up:
            ax, Ax = _carry_jump(ax, Ax, eps, c, C, g1, up_coef)
            ay, Ay = _carry_jump(ay, Ay, -eps, c, C, g1, up_coef)
        else:
            ax, Ax = _carry_jump(ax, Ax, -eps, c, C, g1, up_coef)
            ay, Ay = _carry_jump(ay, Ay, eps, c, C, g1, up_coef)
        ax, Ax = _carry_drift(ax, Ax, t, c, C, g1, down_coef)
        ay, Ay = _carry_drift(ay, Ay, t, c, C, g1, down_coef)
        if i % RESYNC_EVERY == 0:
            Ax = ax**g1
            Ay = ay**g1
        out[i, 0] = ax - c
        out[i, 1] = ay - c
    return out


@njit
def _phi_trace_direct(x, y, eps, gamma, c, st, table, out):
    """Reference for :func:`_phi_trace`: the closed-form drift evaluated with powers."""
    e2 = eps * eps
    out[0, 0] = x
    out[0, 1] = y
    for i in range(1, out.shape[0]):
        up, u = next_coin_uniform(st)
        t = e2 * tau_from_uniform(u, table)
        x, y = _jump(x, y, up, eps)
        x = h_dist_scalar(t, x, gamma, c)
        y = h_dist_scalar(t, y, gamma, c)
        out[i, 0] = x
        out[i, 1] = y
    return out


def phi_step(state: PhiState, eps: float, gamma: float, rng: RngLike, shift: float = 0.0) -> PhiState:
    """One chain step with the closed-form drift (no carried powers)."""
    out = np.empty((2, 2))
    _phi_trace_direct(float(state.x), float(state.y), float(eps), float(gamma), 1.0 + shift,
                      as_kernel_state(rng), quantile_table(), out)
    return PhiState(float(out[1, 0]), float(out[1, 1]))


def phi_path(start: PhiState, eps: float, gamma: float, n_steps: int, rng: RngLike,
             shift: float = 0.0, direct: bool = False) -> np.ndarray:
    """``n_steps + 1`` consecutive chain states as an ``(n, 2)`` array.

    ``direct=True`` evaluates every drift with powers instead of the carried
    series; both consume the random stream identically.
    """
    DriftParams(gamma, shift)
    out = np.empty((n_steps + 1, 2))
    st = as_kernel_state(rng)
    if direct:
        return _phi_trace_direct(float(start.x), float(start.y), float(eps), float(gamma),
                                 1.0 + shift, st, quantile_table(), out)
    up, down = series_coefficients(gamma)
    return _phi_trace(float(start.x), float(start.y), float(eps), float(gamma), 1.0 + shift,
                      st, quantile_table(), up, down, out)


# ------------------------------------------------------------ hitting runs

def wilson_interval(successes: int, n: int, level: float = 0.95) -> tuple[float, float]:
    if n == 0:
        return 0.0, 1.0
    z = norm.ppf(0.5 + level / 2)
    p = successes / n
    den = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return max(0.0, centre - half), min(1.0, centre + half)


@dataclass
class HittingResult:
    k: int
    gamma: float
    eps: float
    replicas: int
    hits_lower: int
    hits_upper: int
    censored: int
    total_steps: int

    @property
    def decided(self) -> int:
        return self.hits_lower + self.hits_upper

    @property
    def estimate(self) -> float:
        return self.hits_lower / self.decided if self.decided else float("nan")

    @property
    def ci(self) -> tuple[float, float]:
        return wilson_interval(self.hits_lower, self.decided)

    def row(self) -> dict:
        lo, hi = self.ci
        return {"k": self.k, "gamma": self.gamma, "eps": self.eps, "replicas": self.replicas,
                "estimate": self.estimate, "ci_lo": lo, "ci_hi": hi, "censored": self.censored}


def run_until_exit(start: PhiState, eps: float, gamma: float, lo: float, hi: float,
                   stream: RngStream, max_steps: int = DEFAULT_MAX_STEPS,
                   shift: float = 0.0) -> tuple[int, int]:
    """One replica; returns ``(status, steps)`` with status 1 lower, 2 upper, 3 censored."""
    up, down = series_coefficients(gamma)
    _, _, steps, status = _phi_run(float(start.x), float(start.y), float(eps), float(gamma),
                                   1.0 + shift, float(lo), float(hi), int(max_steps),
                                   stream.kernel_state(), quantile_table(), up, down)
    return int(status), int(steps)


def hitting_experiment(k: int, start: PhiState, eps: float, gamma: float, replicas: int,
                       seed: int = 0, max_steps: int = DEFAULT_MAX_STEPS,
                       threads: int = 1, first_stream: int = 0, shift: float = 0.0) -> HittingResult:
    """Estimate ``P(reach l1 <= 4**(k-1) before l1 >= 4**(k+1))`` from ``start`` on ``M(k)``.

    Replica ``r`` uses stream ``(seed, first_stream + r)``; boundary values
    count as hits.  Censored replicas are excluded from the estimate and
    reported separately.
    """
    levels = LevelSets(k)
    if not math.isclose(start.norm1, levels.mid, rel_tol=1e-12):
        raise ValueError(f"start {start} is not on M({k}) (x + y must be {levels.mid:g})")
    if replicas < 1:
        raise ValueError("replicas must be >= 1")

    def one(r):
        return run_until_exit(start, eps, gamma, levels.lo, levels.hi,
                              RngStream(seed, first_stream + r), max_steps, shift)

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            res = list(ex.map(one, range(replicas)))
    else:
        res = [one(r) for r in range(replicas)]
    status = np.array([s for s, _ in res])
    return HittingResult(k, gamma, eps, replicas, int(np.sum(status == 1)), int(np.sum(status == 2)),
                         int(np.sum(status == 3)), int(sum(n for _, n in res)))


# ------------------------------------------------ random-walk reductions

def gambler_ruin(k: int) -> float:
    """P(symmetric walk from 0 hits -1 before k)."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    return k / (k + 1)


@njit
def _ruin_walks(k, st, out):
    for r in range(out.shape[0]):
        s = 0
        while -1 < s < k:
            s += 1 if next_uniform(st) < 0.5 else -1
        out[r] = s == -1
    return out


def simulate_gambler_ruin(k: int, replicas: int, rng: RngLike) -> float:
    out = _ruin_walks(int(k), as_kernel_state(rng), np.zeros(replicas, dtype=np.bool_))
    return float(out.mean())


def axis_escape_probability(k: int, eps: float) -> float:
    """Product over axis levels of the chance to climb one level before reaching the bisector.

    This is the probability of reaching ``l1 >= 4**(k+1)`` before the
    bisector in the drift-free axis game started at ``(0, 4**k)``.  The
    product telescopes, so the value is ``(4**k/2) / (4**k/2 + n*eps)`` with
    ``n`` the rounded-down number of factors (``1/7`` when eps divides).
    """
    a = 4.0**k / 2.0
    n = int(math.floor(3.0 * 4.0**k / eps + 1e-9))
    i = np.arange(n)
    return float(np.exp(np.sum(np.log1p(-eps / (a + i * eps + eps)))))


def axis_escape_bound(k: int, eps: float) -> float:
    """Upper bound ``(1 - 2 eps/(7 4**k))**(3 4**k/eps)`` on the product; tends to ``exp(-6/7)``."""
    m = 3.0 * 4.0**k / eps
    return float(math.exp(m * math.log1p(-2.0 * eps / (7.0 * 4.0**k))))


@njit
def _axis_game(K0, n_levels, st, out):
    """Per-level ruin game; ``out[r]`` is 1 when every level was climbed.

    At level ``i`` a symmetric walk from 0 either steps back to -1 (the
    particle moves up the axis) or reaches ``K0 + i`` (the bisector).
    """
    for r in range(out.shape[0]):
        out[r] = 1
        for i in range(n_levels):
            s = 0
            K = K0 + i
            while -1 < s < K:
                s += 1 if next_uniform(st) < 0.5 else -1
            if s == K:
                out[r] = 0
                break
    return out


def simulate_axis_game(k: int, eps: float, replicas: int, rng: RngLike) -> float:
    """Monte Carlo of the axis game (oracle for :func:`axis_escape_probability`)."""
    K0 = int(round(4.0**k / (2.0 * eps)))
    n = int(math.floor(3.0 * 4.0**k / eps + 1e-9))
    out = _axis_game(K0, n, as_kernel_state(rng), np.zeros(replicas, dtype=np.int8))
    return float(out.mean())


# ---------------------------------------------------------- tube geometry

def drift_speed(state: PhiState, gamma: float) -> float:
    return math.sqrt((1 + state.x) ** (-2 * gamma) + (1 + state.y) ** (-2 * gamma))


def min_drift_speed(k: int, gamma: float) -> float:
    return math.sqrt(2.0) * (1 + 2 * 4.0**k) ** (-gamma)


def tube_boundary(x, k: int, gamma: float):
    """Largest ``y`` from which drift reaches ``M^-(k)`` before the ``x``-axis."""
    g1 = gamma + 1.0
    x = np.asarray(x, dtype=float)
    out = ((4.0 ** (k - 1) + 1) ** g1 + (x + 1) ** g1 - 1) ** (1 / g1) - 1
    return out[()] if out.ndim == 0 else out


def tube_diameter_lower(k: int, gamma: float) -> float:
    m = 2 * 4.0**k
    return math.sqrt(2.0) * (float(tube_boundary(m, k, gamma)) - m)


def optimal_alpha(c: float) -> float:
    """Root of ``cosh(s) = sinh(s)/(c s)`` in ``s = sqrt(2 alpha)``, returned as alpha."""
    if not 0 < c < 1:
        raise ValueError(f"c must lie in (0, 1), got {c}")
    def f(s):
        return c * s - math.tanh(s)

    hi = 1.0
    while f(hi) < 0:
        hi *= 2
    s = optimize.brentq(f, 1e-8, hi)
    return s * s / 2


def early_exit_bound(c: float, alpha: float | None = None) -> float:
    """Markov bound ``exp(alpha c)/cosh(sqrt(2 alpha))`` on ``P(exit before c)``."""
    if alpha is None:
        alpha = optimal_alpha(c)
    return math.exp(alpha * c) / math.cosh(math.sqrt(2 * alpha))


@njit
def _exit_steps(half, st, out):
    for r in range(out.shape[0]):
        s = 0
        m = 0
        while -half < s < half:
            s += 1 if next_uniform(st) < 0.5 else -1
            m += 1
        out[r] = m
    return out


@dataclass
class TubeResidenceReport:
    k: int
    eps: float
    c: float
    D: float
    half_width: int
    expected_steps: float
    mean_steps: float
    p_c: float
    alpha_opt: float
    bound: float


def tube_residence(k: int, eps: float, c: float, replicas: int, rng: RngLike,
                   D: float = ANSATZ_D) -> TubeResidenceReport:
    """Empirical ``p_c = P(xi >= c E xi)`` for a walk leaving ``(-D 4**k/eps, D 4**k/eps)``."""
    half = max(1, int(round(D * 4.0**k / eps)))
    out = _exit_steps(half, as_kernel_state(rng), np.zeros(replicas, dtype=np.int64))
    expected = float(half) ** 2
    a = optimal_alpha(c)
    return TubeResidenceReport(k, eps, c, D, half, expected, float(out.mean()),
                               float(np.mean(out >= c * expected)), a,
                               min(1.0, early_exit_bound(c, a)))


# ----------------------------------------------------- transience machinery

def test_function(state: PhiState, gamma: float) -> float:
    g1 = gamma + 1.0
    return 1.0 - ((state.x + 1) ** g1 + (state.y + 1) ** g1) ** (-1.0 / g1)


def _inv_norm(x, y, gamma):
    g1 = gamma + 1.0
    return ((x + 1) ** g1 + (y + 1) ** g1) ** (-1.0 / g1)


def norm_level_point(z: float, angle: float, gamma: float) -> PhiState:
    """Point of ``{||(x+1, y+1)||_{gamma+1} = z}`` on the ray from (-1,-1) at ``angle``.

    Points whose ray leaves the quadrant are clipped onto the nearest axis.
    """
    g1 = gamma + 1.0
    ca, sa = math.cos(angle), math.sin(angle)
    r = z / (ca**g1 + sa**g1) ** (1 / g1)
    x, y = r * ca - 1, r * sa - 1
    if x < 0:
        x, y = 0.0, (z**g1 - 1) ** (1 / g1) - 1
    elif y < 0:
        x, y = (z**g1 - 1) ** (1 / g1) - 1, 0.0
    return PhiState(x, y)


@dataclass
class GeneratorEstimate:
    state: PhiState
    eps: float
    gamma: float
    lg_value: float
    std_err: float
    method: str


def _branch_gain(tau, state: PhiState, eps: float, gamma: float):
    """``0.5 * sum over jump branches of g(next) - g(state)`` at unit exit time(s) ``tau``."""
    p = DriftParams(gamma)
    t = eps**2 * np.asarray(tau, dtype=float)
    base = _inv_norm(state.x, state.y, gamma)
    x1, y1 = state.x + eps, max(state.y - eps, 0.0)
    x2, y2 = max(state.x - eps, 0.0), state.y + eps
    a = _inv_norm(h_dist(t, x1, p), h_dist(t, y1, p), gamma)
    b = _inv_norm(h_dist(t, x2, p), h_dist(t, y2, p), gamma)
    # g = 1 - 1/||.||, so g(next) - g(state) = 1/||state|| - 1/||next||
    return (base - a) * 0.5 + (base - b) * 0.5


TAU_MAX = 40.0


def generator_gap(state: PhiState, eps: float, gamma: float, method: str = "quadrature",
                  samples: int = 1_000_000, rng: RngLike | None = None) -> GeneratorEstimate:
    """``L g(state) = E g(Phi_1) - g(state)`` with both jump branches averaged exactly."""
    if method == "quadrature":
        tol = 1e-14

        def f(tau):
            return float(unit_exit_density(tau, tol) * _branch_gain(tau, state, eps, gamma))

        pts = [0.05, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0]
        val, err = integrate.quad(f, 0.0, TAU_MAX, points=pts, epsabs=1e-17, epsrel=1e-11, limit=500)
        # unit exit-time mass beyond TAU_MAX, times the largest possible |g difference|
        tail = 4 / math.pi * math.exp(-math.pi**2 * TAU_MAX / 8)
        return GeneratorEstimate(state, eps, gamma, val, err + tail + tol * TAU_MAX, "quadrature")
    if method == "monte_carlo":
        if samples < 1:
            raise ValueError("samples must be >= 1")
        gen = as_generator(0 if rng is None else rng)
        vals = _branch_gain(tau_quantile(gen.random(samples)), state, eps, gamma)
        se = float(vals.std(ddof=1) / math.sqrt(samples)) if samples > 1 else float("inf")
        return GeneratorEstimate(state, eps, gamma, float(vals.mean()), se, "monte_carlo")
    raise ValueError(f"unknown method {method!r}")


def taylor_condition(state: PhiState, gamma: float) -> bool:
    return gamma * ((state.x + 1) ** (gamma - 1) + (state.y + 1) ** (gamma - 1)) >= 4.0


def scan_generator_threshold(gamma: float, eps: float, z_grid, n_angles: int = 9) -> dict:
    """Smallest grid ``z`` above which ``L g > 0`` on every sampled point of every level set.

    Returns the threshold (``nan`` if the top of the grid already fails) and
    the per-``z`` minimum of ``L g``.
    """
    z_grid = np.sort(np.asarray(z_grid, dtype=float))
    angles = np.linspace(0.0, math.pi / 2, n_angles)
    worst = []
    for z in z_grid:
        vals = [generator_gap(norm_level_point(z, a, gamma), eps, gamma).lg_value for a in angles]
        worst.append(min(vals))
    worst = np.array(worst)
    threshold = float("nan")
    for z, w in zip(z_grid[::-1], worst[::-1]):
        if w <= 0:
            break
        threshold = float(z)
    return {"z": z_grid, "min_lg": worst, "threshold": threshold}
