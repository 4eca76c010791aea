"""``stalker-sim`` command line: validate configs and run experiments into CSV files."""
from __future__ import annotations

import argparse
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig, format_value, load_config
from .io import write_csv, write_manifest
from .rng import RngStream


def _map(fn, items, threads: int):
    """Ordered map; results come back in input order whatever ``threads`` is."""
    items = list(items)
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(threads) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


def _run_stalker(cfg: ExperimentConfig, out: Path) -> list[Path]:
    from .paths import sample_skeleton, skeleton_rows
    from .stalker import DriftParams, build_trajectory

    p = cfg.params
    sk = sample_skeleton(p["eps"], p["n_jumps"], RngStream(cfg.seed))
    traj = build_trajectory(sk, DriftParams(p["gamma"], p["shift"]))
    return [write_csv(out / "skeleton.csv", ("jump_time", "level"), skeleton_rows(sk)),
            write_csv(out / "trajectory.csv", ("jump_time", "B_level", "X", "Y"), traj.rows())]


def _run_convergence(cfg: ExperimentConfig, out: Path) -> list[Path]:
    from .paths import gen_fine_path
    from .stalker import convergence_experiment

    p = cfg.params

    def one(i):
        path = gen_fine_path(p["t_star"], p["dt"], RngStream(cfg.seed, i))
        r = convergence_experiment(path, p["eps"], p["eps_prime"], p["gamma"], p["t_star"])
        return (i, r.sup_diff, r.bound, r.violation)

    rows = _map(one, range(p["paths"]), cfg.threads)
    return [write_csv(out / "convergence.csv", ("path", "sup_diff", "bound", "violation"), rows)]


def _run_hitting(cfg: ExperimentConfig, out: Path) -> list[Path]:
    from .phi_chain import PhiState, hitting_experiment

    p = cfg.params
    mid = 4.0 ** p["k"]
    if p["start_x"] > mid:
        raise ValueError(f"start_x={p['start_x']} exceeds 4**k={mid:g}")
    res = hitting_experiment(p["k"], PhiState(p["start_x"], mid - p["start_x"]), p["eps"], p["gamma"],
                             p["replicas"], seed=cfg.seed, max_steps=p["max_steps"],
                             threads=cfg.threads, shift=p["shift"])
    row = res.row()
    header = ("k", "gamma", "eps", "replicas", "estimate", "ci_lo", "ci_hi", "censored")
    return [write_csv(out / "hitting.csv", header, [tuple(row[h] for h in header)])]


def _run_generator(cfg: ExperimentConfig, out: Path) -> list[Path]:
    from .phi_chain import PhiState, generator_gap, taylor_condition

    p = cfg.params

    def one(i):
        s = PhiState(p["x"][i], p["y"][i])
        est = generator_gap(s, p["eps"], p["gamma"], method=p["method"], samples=p["samples"],
                            rng=RngStream(cfg.seed, i))
        return (s.x, s.y, p["gamma"], p["eps"], est.lg_value, est.std_err,
                taylor_condition(s, p["gamma"]))

    rows = _map(one, range(len(p["x"])), cfg.threads)
    header = ("x", "y", "gamma", "eps", "lg_value", "std_err", "taylor_condition")
    return [write_csv(out / "generator.csv", header, rows)]


def _game_config(p: dict):
    from .opinion_game import GameConfig

    keys = GameConfig.__dataclass_fields__.keys()
    return GameConfig(**{k: p[k] for k in keys})


def _write_series(run, out: Path) -> Path:
    from .opinion_game import SERIES_COLUMNS

    return write_csv(out / "series.csv", SERIES_COLUMNS, run.rows())


def _run_opinion_game(cfg: ExperimentConfig, out: Path) -> list[Path]:
    from .opinion_game import run

    p = cfg.params
    factor = p["stop_gap_factor"] or None
    res = run(_game_config(p), p["horizon"], RngStream(cfg.seed), snapshot_steps=p["snapshot_steps"],
              stop_gap_factor=factor)
    files = [_write_series(res, out)]
    for t, book in sorted(res.snapshots.items()):
        files.append(write_csv(out / f"snapshot_{t}.csv", ("trader_index", "opinion", "owns"),
                               book.snapshot_rows()))
    return files


def _run_stats(cfg: ExperimentConfig, out: Path) -> list[Path]:
    from .stats import (excess_kurtosis, recurrence_diagnostics, returns, volatility_autocorr,
                        white_noise_band, SeriesRecord)

    p = cfg.params
    if p["source"] == "opinion_game":
        from .opinion_game import run

        res = run(_game_config(p), p["horizon"], RngStream(cfg.seed))
        ret = returns(res.series("price"))
        acf = volatility_autocorr(ret, p["window"], p["max_lag"])
        n_windows = len(ret) // p["window"]
        summary = [("n_returns", len(ret)), ("excess_kurtosis", excess_kurtosis(ret)),
                   ("n_windows", n_windows), ("white_noise_band", white_noise_band(n_windows))]
        return [_write_series(res, out),
                write_csv(out / "acf.csv", ("lag", "acf"), acf.rows()),
                write_csv(out / "summary.csv", ("statistic", "value"), summary)]

    from .phi_chain import PhiState, phi_path

    def one(i):
        path = phi_path(PhiState(0.0, 0.0), p["eps"], p["gamma"], p["n_steps"], RngStream(cfg.seed, i))
        dist = path.sum(axis=1)
        rep = recurrence_diagnostics(SeriesRecord(np.arange(dist.size, dtype=float), dist), p["radius"])
        return (i, rep.r, rep.horizon, rep.last_exit, rep.visit_count, rep.growth_exponent)

    rows = _map(one, range(p["replicas"]), cfg.threads)
    header = ("replica", "r", "horizon", "last_exit", "visit_count", "growth_exponent")
    return [write_csv(out / "recurrence.csv", header, rows)]


RUNNERS = {
    "stalker": _run_stalker,
    "convergence": _run_convergence,
    "hitting": _run_hitting,
    "generator": _run_generator,
    "opinion_game": _run_opinion_game,
    "stats": _run_stats,
}


def run_experiment(cfg: ExperimentConfig) -> list[Path]:
    """Run one configured experiment; returns the written files, manifest last."""
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = RUNNERS[cfg.experiment](cfg, out)
    resolved = {k: format_value(k, v) for k, v in cfg.resolved().items()}
    manifest = write_manifest(out, resolved, files, {"sources": cfg.sources})
    return files + [manifest]


def _overrides(args) -> dict[str, str]:
    ov = {}
    if getattr(args, "seed", None) is not None:
        ov["seed"] = str(args.seed)
    if getattr(args, "threads", None) is not None:
        ov["threads"] = str(args.threads)
    if getattr(args, "out", None) is not None:
        ov["output_dir"] = str(args.out)
    return ov


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="stalker-sim", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config")
    r.add_argument("--seed", type=int)
    r.add_argument("--threads", type=int)
    r.add_argument("--out")
    v = sub.add_parser("validate", help="check a config and print the resolved keys")
    v.add_argument("config")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, _overrides(args))
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return 2
    if args.command == "validate":
        for k, v in cfg.resolved().items():
            print(f"{k}={format_value(k, v)}")
        return 0
    try:
        files = run_experiment(cfg)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for f in files:
        print(f)
    return 0


if __name__ == "__main__":
    sys.exit(main())
