"""Fine-grid Brownian paths and their eps-skeletons."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from ._jit import njit
from .exit_time import tau_quantile
from .rng import RngLike, as_generator


@dataclass(frozen=True)
class FinePath:
    dt: float
    values: np.ndarray
    horizon: float

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.values.size) * self.dt


@dataclass(frozen=True)
class Skeleton:
    """Piecewise-constant path: ``levels[i]`` holds on ``[jump_times[i], jump_times[i+1])``.

    ``jump_times[0] == 0`` and the last level holds until ``horizon``.
    """

    epsilon: float
    jump_times: np.ndarray
    levels: np.ndarray
    horizon: float

    def __post_init__(self):
        if self.jump_times.shape != self.levels.shape or self.jump_times.size == 0:
            raise ValueError("jump_times and levels must be non-empty and of equal length")

    @property
    def n_jumps(self) -> int:
        return self.levels.size - 1

    @property
    def durations(self) -> np.ndarray:
        """Completed inter-jump times ``sigma_i``."""
        return np.diff(self.jump_times)

    def mirror(self) -> "Skeleton":
        return Skeleton(self.epsilon, self.jump_times, -self.levels, self.horizon)

    def level_at(self, t) -> np.ndarray:
        idx = np.searchsorted(self.jump_times, np.asarray(t, dtype=float), side="right") - 1
        return self.levels[np.maximum(idx, 0)]


def n_grid(horizon: float, dt: float) -> int:
    return int(math.floor(horizon / dt + 1e-9)) + 1


def gen_fine_path(horizon: float, dt: float, rng: RngLike, b0: float = 0.0) -> FinePath:
    if dt <= 0 or horizon <= 0:
        raise ValueError(f"dt and horizon must be positive (dt={dt}, horizon={horizon})")
    if dt > horizon:
        raise ValueError(f"dt={dt} exceeds horizon={horizon}")
    n = n_grid(horizon, dt)
    values = np.empty(n)
    values[0] = b0
    np.cumsum(as_generator(rng).standard_normal(n - 1) * math.sqrt(dt), out=values[1:])
    values[1:] += b0
    return FinePath(dt, values, horizon)


@njit
def _skeleton_indices(values, eps):
    n = values.shape[0]
    idx = np.empty(n, np.int64)
    lev = np.empty(n)
    idx[0] = 0
    level = values[0]
    lev[0] = level
    m = 1
    for j in range(1, n):
        d = values[j] - level
        if d >= eps:
            level += eps
            idx[m] = j
            lev[m] = level
            m += 1
        elif d <= -eps:
            level -= eps
            idx[m] = j
            lev[m] = level
            m += 1
    return idx[:m], lev[:m]


def extract_skeleton(path: FinePath, epsilon: float) -> Skeleton:
    """First grid times where the path is ``epsilon`` away from the current level.

    The crossed level is snapped to exactly ``level +- epsilon`` rather than
    the overshooting grid value.
    """
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if path.dt > 0.1 * epsilon**2:
        warnings.warn(f"dt={path.dt:g} is not small against epsilon^2={epsilon**2:g}; "
                      "crossing times will be biased", stacklevel=2)
    idx, lev = _skeleton_indices(path.values, float(epsilon))
    return Skeleton(float(epsilon), idx * path.dt, lev, path.horizon)


def sample_skeleton(epsilon: float, n_jumps: int, rng: RngLike, b0: float = 0.0) -> Skeleton:
    """Skeleton drawn directly from its law: i.i.d. exact exit times, fair +-eps steps."""
    gen = as_generator(rng)
    u = gen.random((n_jumps, 2))
    sigma = epsilon**2 * tau_quantile(u[:, 0])
    steps = np.where(u[:, 1] < 0.5, epsilon, -epsilon)
    times = np.concatenate(([0.0], np.cumsum(sigma)))
    levels = np.concatenate(([b0], b0 + np.cumsum(steps)))
    # the open last segment gets one more exit time so horizon > last jump
    tail = epsilon**2 * float(tau_quantile(gen.random()))
    return Skeleton(float(epsilon), times, levels, float(times[-1] + tail))


def skeleton_rows(sk: Skeleton):
    return zip(sk.jump_times, sk.levels)


__all__ = [
    "FinePath", "Skeleton", "gen_fine_path", "extract_skeleton", "sample_skeleton",
    "skeleton_rows",
]
