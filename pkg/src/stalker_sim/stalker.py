"""Stalker processes X and Y chasing an eps-skeleton of the price.

Between jumps the skeleton is a constant ``b`` and the distance ``D = b - X``
obeys ``dD/dt = -(c + D)**(-gamma)`` with ``c = 1`` (or ``1 +- 2 eps`` for the
auxiliary processes).  That ODE is solved in closed form, so trajectories
are stored only at segment ends and rebuilt analytically in between.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._jit import njit
from .paths import FinePath, Skeleton, extract_skeleton


@dataclass(frozen=True)
class DriftParams:
    gamma: float
    shift: float = 0.0

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if not 1.0 + self.shift > 0:
            raise ValueError(f"shift={self.shift} makes the drift constant non-positive")

    @property
    def c(self) -> float:
        return 1.0 + self.shift


@njit
def h_dist_scalar(t, b, gamma, c):
    if b <= 0.0:
        return 0.0
    g1 = gamma + 1.0
    r = (b + c) ** g1 - g1 * t
    floor = c**g1
    if r <= floor:
        return 0.0
    d = r ** (1.0 / g1) - c
    if d <= 0.0:
        return 0.0
    return d if d < b else b


def t_max(b, params: DriftParams):
    """Time needed to close a gap ``b`` completely."""
    g1 = params.gamma + 1.0
    b = np.asarray(b, dtype=float)
    return ((b + params.c) ** g1 - params.c**g1) / g1


def hbar(t, b, params: DriftParams):
    """Distance travelled by the stalker after time ``t`` towards a level ``b`` above it."""
    t = np.asarray(t, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any(b < 0):
        raise ValueError("hbar needs b >= 0")
    if np.any(t < 0):
        raise ValueError("hbar needs t >= 0")
    tm = t_max(b, params)
    if np.any(t > tm * (1 + 1e-12) + 1e-300):
        raise ValueError("t beyond the time at which the stalker reaches b; use h_dist")
    g1 = params.gamma + 1.0
    rad = np.maximum((b + params.c) ** g1 - g1 * t, params.c**g1)
    out = b + params.c - rad ** (1.0 / g1)
    out = np.clip(out, 0.0, b)
    return out[()] if out.ndim == 0 else out


def h_dist(t, b, params: DriftParams):
    """Remaining distance after drifting for ``t`` from distance ``b``; total (0 when closed)."""
    t = np.asarray(t, dtype=float)
    b = np.asarray(b, dtype=float)
    g1 = params.gamma + 1.0
    c = params.c
    bp = np.maximum(b, 0.0)
    rad = (bp + c) ** g1 - g1 * t
    ok = (b > 0) & (rad > c**g1)
    out = np.where(ok, np.clip(np.maximum(rad, 0.0) ** (1.0 / g1) - c, 0.0, bp), 0.0)
    return out[()] if out.ndim == 0 else out


@njit
def _stalk(levels, durations, gamma, c, x0):
    n = levels.shape[0]
    out = np.empty(n)
    x = x0
    for i in range(n):
        lv = levels[i]
        d = lv - x
        if d <= 0.0:
            x = lv
        else:
            x = lv - h_dist_scalar(durations[i], d, gamma, c)
        out[i] = x
    return out


@njit
def _eval_sorted(times, jump_times, levels, ends, start, sign, gamma, c, out):
    """Stalker value at non-decreasing ``times`` by one merge walk over the segments."""
    n = jump_times.shape[0]
    i = 0
    for m in range(times.shape[0]):
        t = times[m]
        while i + 1 < n and jump_times[i + 1] <= t:
            i += 1
        prev = ends[i - 1] if i > 0 else start
        lv = levels[i]
        d = sign * (lv - prev)
        if d <= 0.0:
            out[m] = lv
        else:
            dt = t - jump_times[i]
            if dt < 0.0:
                dt = 0.0
            out[m] = lv - sign * h_dist_scalar(dt, d, gamma, c)
    return out


def _segment_durations(sk: Skeleton) -> np.ndarray:
    return np.append(np.diff(sk.jump_times), max(sk.horizon - sk.jump_times[-1], 0.0))


def evolve(skeleton: Skeleton, params: DriftParams, reflect: bool = False,
           start: float | None = None) -> np.ndarray:
    """Stalker value at the end of every skeleton segment.

    ``out[i]`` is the value just before ``jump_times[i+1]`` (at ``horizon`` for
    the last segment).  ``start`` is the value at ``0-``; default is the
    initial level.  ``reflect=True`` builds the upper stalker via
    ``Y(B) = -X(-B)``.
    """
    lv = skeleton.levels
    if start is None:
        start = float(lv[0])
    dur = _segment_durations(skeleton)
    if reflect:
        return -_stalk(-lv, dur, float(params.gamma), float(params.c), -float(start))
    return _stalk(lv, dur, float(params.gamma), float(params.c), float(start))


@dataclass(frozen=True)
class StalkerTrajectory:
    skeleton: Skeleton
    x_at_jump_minus: np.ndarray
    y_at_jump_minus: np.ndarray
    params: DriftParams
    x0: float = 0.0
    y0: float = 0.0

    def _value_at(self, t, ends, start, sign):
        sk = self.skeleton
        t = np.asarray(t, dtype=float)
        if t.ndim == 1 and t.size > 1 and np.all(t[1:] >= t[:-1]):
            return _eval_sorted(t, sk.jump_times, sk.levels, ends, float(start), sign,
                                float(self.params.gamma), float(self.params.c), np.empty(t.size))
        i = np.maximum(np.searchsorted(sk.jump_times, t, side="right") - 1, 0)
        prev = np.where(i > 0, ends[np.maximum(i - 1, 0)], start)
        lv = sk.levels[i]
        d = sign * (lv - prev)
        gap = h_dist(t - sk.jump_times[i], d, self.params)
        return np.where(d <= 0, lv, lv - sign * gap)

    def x_at(self, t):
        return self._value_at(t, self.x_at_jump_minus, self.x0, 1.0)

    def y_at(self, t):
        return self._value_at(t, self.y_at_jump_minus, self.y0, -1.0)

    def phi(self) -> np.ndarray:
        """Distance chain ``(B - X, Y - B)`` just before each jump, starting at ``0-``."""
        sk = self.skeleton
        x = np.concatenate(([sk.levels[0] - self.x0], sk.levels[:-1] - self.x_at_jump_minus[:-1]))
        y = np.concatenate(([self.y0 - sk.levels[0]], self.y_at_jump_minus[:-1] - sk.levels[:-1]))
        return np.column_stack((x, y))

    def rows(self):
        """``(jump_time, B_level, X, Y)`` rows; X, Y are the values right after each jump."""
        sk = self.skeleton
        x = self.x_at(sk.jump_times)
        y = self.y_at(sk.jump_times)
        return zip(sk.jump_times, sk.levels, x, y)


def build_trajectory(skeleton: Skeleton, params: DriftParams, x0: float | None = None,
                     y0: float | None = None) -> StalkerTrajectory:
    b0 = float(skeleton.levels[0])
    x0 = b0 if x0 is None else float(x0)
    y0 = b0 if y0 is None else float(y0)
    x = evolve(skeleton, params, reflect=False, start=x0)
    y = evolve(skeleton, params, reflect=True, start=y0)
    return StalkerTrajectory(skeleton, x, y, params, x0, y0)


@dataclass
class ConvergenceReport:
    eps: float
    eps_prime: float
    t_star: float
    gamma: float
    sup_diff: float
    bound: float
    per_jump_gaps: np.ndarray = field(repr=False)
    per_jump_dists: np.ndarray = field(repr=False)

    @property
    def violation(self) -> bool:
        return self.sup_diff > self.bound


def admissible_eps(gamma: float, t_star: float) -> float:
    """Largest eps accepted for the coupling bound on ``[0, t_star]``."""
    return 0.1 * math.exp(-gamma * t_star)


def convergence_experiment(path: FinePath, eps: float, eps_prime: float, gamma: float,
                           t_star: float, check_admissible: bool = True) -> ConvergenceReport:
    """Sup distance on ``[0, t_star]`` between stalkers of two skeletons of one path."""
    if not 0 < eps_prime < eps:
        raise ValueError(f"need 0 < eps_prime < eps, got eps={eps}, eps_prime={eps_prime}")
    if t_star <= 0 or t_star > path.horizon:
        raise ValueError(f"t_star must lie in (0, {path.horizon}], got {t_star}")
    if check_admissible and eps > admissible_eps(gamma, t_star):
        raise ValueError(f"eps={eps} too large for gamma={gamma}, t_star={t_star}; "
                         f"need eps <= {admissible_eps(gamma, t_star):.4g}")
    params = DriftParams(gamma)
    coarse = build_trajectory(extract_skeleton(path, eps), params)
    fine = build_trajectory(extract_skeleton(path, eps_prime), params)
    grid = path.times[path.times <= t_star + 1e-12]
    sup_diff = float(np.max(np.abs(fine.x_at(grid) - coarse.x_at(grid))))
    jt = coarse.skeleton.jump_times
    jt = jt[jt <= t_star]
    xc = coarse.x_at(jt)
    gaps = xc - fine.x_at(jt)
    dists = coarse.skeleton.level_at(jt) - xc
    return ConvergenceReport(eps, eps_prime, t_star, gamma, sup_diff,
                             eps * math.exp(gamma * t_star), gaps, dists)


def sandwich_margins(path: FinePath, eps: float, eps_prime: float, gamma: float,
                     t_star: float) -> tuple[float, float]:
    """Worst-case margins of the auxiliary-process sandwich on the path grid.

    Returns ``min(X' - (X_slow - eps))`` and ``min(X_fast + eps - X')`` where
    ``X'`` uses ``eps_prime`` and the shift ``+2 eps`` (slow) / ``-2 eps``
    (fast) processes use ``eps``.  Both are non-negative when the sandwich holds.
    """
    sk = extract_skeleton(path, eps)
    x_fine = build_trajectory(extract_skeleton(path, eps_prime), DriftParams(gamma))
    slow = build_trajectory(sk, DriftParams(gamma, shift=2 * eps))
    fast = build_trajectory(sk, DriftParams(gamma, shift=-2 * eps))
    grid = path.times[path.times <= t_star + 1e-12]
    xf = x_fine.x_at(grid)
    return (float(np.min(xf - (slow.x_at(grid) - eps))),
            float(np.min(fast.x_at(grid) + eps - xf)))
