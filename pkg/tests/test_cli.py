import json
import os
import subprocess
import sys

import numpy as np
import pytest

from stalker_sim.cli import main
from stalker_sim.io import fmt, read_csv

CONFIGS = {
    "stalker": "experiment=stalker\ngamma=1.5\neps=0.05\nn_jumps=500\n",
    "convergence": "experiment=convergence\ngamma=1\neps=0.02\neps_prime=0.01\nt_star=1\ndt=1e-5\npaths=8\n",
    "hitting": "experiment=hitting\ngamma=0.5\nk=1\neps=0.05\nreplicas=24\n",
    "generator": "experiment=generator\ngamma=2\neps=0.01\nx=3,1\ny=3,0\n",
    "opinion_game": "experiment=opinion_game\nhorizon=10000\nsnapshot_steps=5000\n",
    "stats_game": "experiment=stats\nhorizon=30000\nwindow=10\nmax_lag=20\n",
    "stats_phi": "experiment=stats\nsource=phi_chain\ngamma=2\nn_steps=2000\nreplicas=6\n",
}


def _write(tmp_path, name, text):
    p = tmp_path / f"{name}.cfg"
    p.write_text(text)
    return p


def _run(tmp_path, name, threads, tag):
    out = tmp_path / f"{name}-{tag}"
    assert main(["run", str(_write(tmp_path, name, CONFIGS[name])), "--threads", str(threads),
                 "--out", str(out), "--seed", "5"]) == 0
    return out


@pytest.mark.parametrize("name", sorted(CONFIGS))
def test_runs_are_byte_identical_across_repeats_and_threads(tmp_path, name):
    a = _run(tmp_path, name, 1, "a")
    b = _run(tmp_path, name, 1, "b")
    c = _run(tmp_path, name, 8, "c")
    csvs = sorted(p.name for p in a.glob("*.csv"))
    assert csvs
    for f in csvs:
        assert (a / f).read_bytes() == (b / f).read_bytes() == (c / f).read_bytes()
    ma, mc = json.loads((a / "manifest.json").read_text()), json.loads((c / "manifest.json").read_text())
    assert ma["outputs"] == mc["outputs"]


def test_hitting_output(tmp_path):
    out = _run(tmp_path, "hitting", 2, "h")
    header, data = read_csv(out / "hitting.csv")
    assert header == ["k", "gamma", "eps", "replicas", "estimate", "ci_lo", "ci_hi", "censored"]
    assert data.shape == (1, 8)


def test_opinion_game_output(tmp_path):
    out = _run(tmp_path, "opinion_game", 1, "g")
    header, data = read_csv(out / "series.csv")
    assert header == ["step", "price", "ask", "bid", "gap", "delta_ext"]
    assert data.shape[0] == 100
    assert (out / "snapshot_5000.csv").exists()


def test_manifest_lists_every_default(tmp_path):
    out = _run(tmp_path, "hitting", 1, "m")
    man = json.loads((out / "manifest.json").read_text())
    for key in ("max_steps", "start_x", "shift", "replicas", "threads", "seed", "output_dir"):
        assert key in man["config"]
    assert man["config"]["seed"] == "5" and man["sources"]["seed"] == "cli"
    assert set(man["outputs"]) == {"hitting.csv"}
    assert man["backend"] in ("numba", "python")


def test_validate_and_errors(tmp_path, capsys):
    good = _write(tmp_path, "good", CONFIGS["hitting"])
    assert main(["validate", str(good)]) == 0
    assert "max_steps=10000000" in capsys.readouterr().out
    bad = _write(tmp_path, "bad", "gamma=-1\nfoo=2\n")
    assert main(["validate", str(bad)]) == 2
    err = capsys.readouterr().err
    assert "gamma" in err and "foo" in err and "experiment" in err
    assert main(["validate", str(tmp_path / "missing.cfg")]) == 2
    off = _write(tmp_path, "off", "experiment=hitting\ngamma=1\neps=0.1\nk=1\nstart_x=9\n")
    assert main(["run", str(off), "--out", str(tmp_path / "o")]) == 1


def test_env_override_through_cli(tmp_path, monkeypatch):
    monkeypatch.setenv("STALKER_REPLICAS", "3")
    out = _run(tmp_path, "hitting", 1, "e")
    man = json.loads((out / "manifest.json").read_text())
    assert man["config"]["replicas"] == "3" and man["sources"]["replicas"] == "env"


def test_float_format_round_trips():
    for v in (0.1, 1 / 3, 1e-300, 2.0**0.5, -7.25e17):
        assert float(fmt(v)) == v
    assert fmt(True) == "1" and fmt(np.int64(4)) == "4"


def test_console_script_entry_point(tmp_path):
    cfg = _write(tmp_path, "s", CONFIGS["stalker"])
    r = subprocess.run([sys.executable, "-m", "stalker_sim.cli", "validate", str(cfg)],
                       capture_output=True, text=True, env={**os.environ})
    assert r.returncode == 0 and "experiment=stalker" in r.stdout
