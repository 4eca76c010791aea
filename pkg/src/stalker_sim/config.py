"""Flat ``key=value`` experiment configs.

Every key has a type, a default (or is required) and the experiments it
applies to.  Parsing collects every problem before failing so a config can
be fixed in one pass.  ``STALKER_<KEY>`` environment variables override
file values; ``STALKER_NOJIT`` is reserved for the JIT switch.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Any, Callable

EXPERIMENTS = ("stalker", "convergence", "hitting", "generator", "opinion_game", "stats")
ENV_PREFIX = "STALKER_"
RESERVED_ENV = {"STALKER_NOJIT"}
_GAME = ("opinion_game", "stats")
_ALL = EXPERIMENTS


class ConfigError(ValueError):
    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("invalid config:\n" + "\n".join(f"  - {p}" for p in self.problems))


def _int(s: str) -> int:
    try:
        return int(s)
    except ValueError:
        x = float(s)
        if not x.is_integer():
            raise ValueError(f"{s!r} is not an integer") from None
        return int(x)


def _float(s: str) -> float:
    x = float(s)
    if not math.isfinite(x):
        raise ValueError(f"{s!r} is not finite")
    return x


def _range(s: str) -> tuple[int, int]:
    lo, sep, hi = s.partition("..")
    if not sep:
        raise ValueError(f"{s!r} is not an interval lo..hi")
    return _int(lo.strip()), _int(hi.strip())


def _int_list(s: str) -> tuple[int, ...]:
    return tuple(_int(p.strip()) for p in s.split(",") if p.strip())


def _float_list(s: str) -> tuple[float, ...]:
    return tuple(_float(p.strip()) for p in s.split(",") if p.strip())


def _enum(*choices: str) -> Callable[[str], str]:
    def parse(s: str) -> str:
        if s not in choices:
            raise ValueError(f"{s!r} is not one of {', '.join(choices)}")
        return s

    parse.__name__ = "one of " + "|".join(choices)
    return parse


def _positive(x) -> str | None:
    return None if x > 0 else "must be positive"


def _non_negative(x) -> str | None:
    return None if x >= 0 else "must be non-negative"


def _at_least(m):
    def check(x):
        return None if x >= m else f"must be >= {m}"

    return check


def _seed_range(x) -> str | None:
    return None if 0 <= x < 2**64 else "must be a 64-bit unsigned integer"


@dataclass(frozen=True)
class Key:
    parse: Callable[[str], Any]
    default: Any = None
    required: bool = False
    check: Callable[[Any], str | None] | None = None
    experiments: tuple[str, ...] = _ALL


SCHEMA: dict[str, Key] = {
    "experiment": Key(_enum(*EXPERIMENTS), required=True),
    "seed": Key(_int, 0, check=_seed_range),
    "threads": Key(_int, 1, check=_at_least(1)),
    "output_dir": Key(str, "out"),
    # shared model parameters
    "gamma": Key(_float, None, check=_positive,
                 experiments=("stalker", "convergence", "hitting", "generator") + _GAME),
    "eps": Key(_float, None, check=_positive,
               experiments=("stalker", "convergence", "hitting", "generator", "stats")),
    # stalker
    "n_jumps": Key(_int, 1000, check=_at_least(1), experiments=("stalker",)),
    "shift": Key(_float, 0.0, experiments=("stalker", "hitting")),
    # convergence
    "eps_prime": Key(_float, None, check=_positive, experiments=("convergence",)),
    "t_star": Key(_float, None, check=_positive, experiments=("convergence",)),
    "dt": Key(_float, 1e-6, check=_positive, experiments=("convergence",)),
    "paths": Key(_int, 100, check=_at_least(1), experiments=("convergence",)),
    # hitting
    "k": Key(_int, None, check=_at_least(0), experiments=("hitting",)),
    "replicas": Key(_int, 2000, check=_at_least(1), experiments=("hitting", "stats")),
    "start_x": Key(_float, 0.0, check=_non_negative, experiments=("hitting",)),
    "max_steps": Key(_int, 10_000_000, check=_at_least(1), experiments=("hitting",)),
    # generator
    "x": Key(_float_list, (3.0,), experiments=("generator",)),
    "y": Key(_float_list, (3.0,), experiments=("generator",)),
    "method": Key(_enum("quadrature", "monte_carlo"), "quadrature", experiments=("generator",)),
    "samples": Key(_int, 1_000_000, check=_at_least(2), experiments=("generator",)),
    # opinion game
    "n_traders": Key(_int, 2000, check=_at_least(2), experiments=_GAME),
    "n_shares": Key(_int, 1000, check=_at_least(1), experiments=_GAME),
    "l": Key(_int, 4, check=_at_least(1), experiments=_GAME),
    "drift_magnitude": Key(_float, 0.1, check=_positive, experiments=_GAME),
    "ext_mean": Key(_float, 0.12, check=_positive, experiments=_GAME),
    "ext_rate_steps": Key(_int, 2000, check=_at_least(1), experiments=_GAME),
    "jump_away_range": Key(_range, (5, 20), experiments=_GAME),
    "record_every": Key(_int, 100, check=_at_least(1), experiments=_GAME),
    "init_width": Key(_int, 400, check=_non_negative, experiments=_GAME),
    "price_formula": Key(_enum("mid", "half_spread"), "mid", experiments=_GAME),
    "drift_rule": Key(_enum("sign", "role"), "sign", experiments=_GAME),
    "horizon": Key(_int, 1_000_000, check=_at_least(1), experiments=_GAME),
    "snapshot_steps": Key(_int_list, (), experiments=("opinion_game",)),
    "stop_gap_factor": Key(_float, 0.0, check=_non_negative, experiments=("opinion_game",)),
    # stats
    "source": Key(_enum("opinion_game", "phi_chain"), "opinion_game", experiments=("stats",)),
    "window": Key(_int, 100, check=_at_least(1), experiments=("stats",)),
    "max_lag": Key(_int, 100, check=_at_least(1), experiments=("stats",)),
    "n_steps": Key(_int, 100_000, check=_at_least(1), experiments=("stats",)),
    "radius": Key(_float, 1.0, check=_positive, experiments=("stats",)),
}

REQUIRED_BY = {
    "stalker": ("gamma", "eps"),
    "convergence": ("gamma", "eps", "eps_prime", "t_star"),
    "hitting": ("gamma", "eps", "k"),
    "generator": ("gamma", "eps"),
    "opinion_game": (),
    "stats": (),
}
DEFAULT_GAMMA = {"opinion_game": 1.5, "stats": 1.5}
DEFAULT_EPS = {"stats": 0.05}


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int
    params: dict[str, Any]
    output_dir: str
    threads: int = 1
    sources: dict[str, str] = field(default_factory=dict)

    def resolved(self) -> dict[str, Any]:
        """Every key the run uses, defaults included."""
        out = {"experiment": self.experiment, "seed": self.seed, "threads": self.threads,
               "output_dir": self.output_dir}
        out.update(self.params)
        return out


def _lines(text: str):
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield n, line


def read_pairs(text: str) -> tuple[dict[str, str], list[str]]:
    pairs: dict[str, str] = {}
    problems = []
    for n, line in _lines(text):
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            problems.append(f"line {n}: expected key=value, got {line!r}")
            continue
        if key in pairs:
            problems.append(f"line {n}: duplicate key {key!r}")
        pairs[key] = value
    return pairs, problems


def env_overrides(environ=None) -> dict[str, str]:
    environ = os.environ if environ is None else environ
    out = {}
    for name, value in environ.items():
        if name.startswith(ENV_PREFIX) and name not in RESERVED_ENV:
            out[name[len(ENV_PREFIX):].lower()] = value
    return out


def parse_config(text: str, overrides: dict[str, str] | None = None,
                 environ=None) -> ExperimentConfig:
    """Parse and validate a config; raises :class:`ConfigError` listing every problem.

    Precedence, lowest first: file, ``STALKER_*`` environment, ``overrides``.
    """
    pairs, problems = read_pairs(text)
    sources = {k: "file" for k in pairs}
    for k, v in env_overrides(environ).items():
        pairs[k] = v
        sources[k] = "env"
    for k, v in (overrides or {}).items():
        pairs[k] = str(v)
        sources[k] = "cli"

    values: dict[str, Any] = {}
    for key, raw in pairs.items():
        spec = SCHEMA.get(key)
        if spec is None:
            problems.append(f"unknown key {key!r}")
            continue
        try:
            values[key] = spec.parse(raw)
        except ValueError as exc:
            problems.append(f"{key}: cannot parse {raw!r} ({exc})")
            continue
        if spec.check is not None:
            msg = spec.check(values[key])
            if msg:
                problems.append(f"{key}={raw}: {msg}")

    exp = values.get("experiment")
    if "experiment" not in pairs:
        problems.append("missing required key 'experiment'")
    if exp is not None:
        for key in values:
            if key not in ("experiment", "seed", "threads", "output_dir") and exp not in SCHEMA[key].experiments:
                problems.append(f"key {key!r} does not apply to experiment {exp!r}")
        for key in REQUIRED_BY[exp]:
            if key not in pairs:
                problems.append(f"missing required key {key!r} for experiment {exp!r}")
        problems.extend(_cross_checks(exp, values))
    if problems:
        raise ConfigError(problems)

    params = {}
    for key, spec in SCHEMA.items():
        if key in ("experiment", "seed", "threads", "output_dir") or exp not in spec.experiments:
            continue
        if key in values:
            params[key] = values[key]
        elif key == "gamma":
            params[key] = DEFAULT_GAMMA.get(exp)
        elif key == "eps":
            params[key] = DEFAULT_EPS.get(exp)
        else:
            params[key] = spec.default
    return ExperimentConfig(exp, values.get("seed", SCHEMA["seed"].default), params,
                            values.get("output_dir", SCHEMA["output_dir"].default),
                            values.get("threads", SCHEMA["threads"].default), sources)


def _cross_checks(exp: str, v: dict) -> list[str]:
    out = []
    if exp == "convergence" and "eps" in v and "eps_prime" in v and not v["eps_prime"] < v["eps"]:
        out.append("eps_prime must be smaller than eps")
    if exp in _GAME:
        n = v.get("n_traders", SCHEMA["n_traders"].default)
        m = v.get("n_shares", SCHEMA["n_shares"].default)
        if not m < n:
            out.append(f"n_shares={m} must be smaller than n_traders={n}")
        lo, hi = v.get("jump_away_range", SCHEMA["jump_away_range"].default)
        if not 0 <= lo <= hi:
            out.append(f"jump_away_range={lo}..{hi} must satisfy 0 <= lo <= hi")
    if exp == "generator" and len(v.get("x", (0,))) != len(v.get("y", (0,))):
        out.append("x and y must list the same number of points")
    return out


def load_config(path, overrides: dict[str, str] | None = None, environ=None) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), overrides, environ)


def format_value(key: str, v) -> str:
    """Inverse of the key parsers, used for manifests."""
    if v is None:
        return ""
    spec = SCHEMA.get(key)
    if spec is not None and spec.parse is _range:
        return f"{v[0]}..{v[1]}"
    if isinstance(v, tuple):
        return ",".join(repr(x) if isinstance(x, float) else str(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)
