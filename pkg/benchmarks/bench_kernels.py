"""Time the hot kernels under numba and under the plain-Python fallback.

Each backend runs in its own interpreter (the switch is read at import).
Usage: python benchmarks/bench_kernels.py [--scale S]
"""
import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
from stalker_sim._jit import backend
from stalker_sim.rng import RngStream
from stalker_sim.phi_chain import PhiState, phi_path, simulate_gambler_ruin
from stalker_sim.paths import extract_skeleton, gen_fine_path
from stalker_sim.opinion_game import GameConfig, OpinionGame

scale = float(sys.argv[1])

def timed(fn, n):
    fn(max(1, n // 100))  # compile / warm up
    t = time.perf_counter()
    fn(n)
    return (time.perf_counter() - t) / n

path = gen_fine_path(20.0, 1e-6, RngStream(2))
res = {
    "phi step": timed(lambda n: phi_path(PhiState(1.0, 0.0), 0.05, 1.6, n, RngStream(1)), int(2e6 * scale)),
    "skeleton grid point": timed(lambda n: extract_skeleton(type(path)(path.dt, path.values[:n], n * path.dt), 0.02),
                                 int(2e7 * scale)),
    "ruin walk (k=10)": timed(lambda n: simulate_gambler_ruin(10, n, RngStream(3)), int(1e5 * scale)),
    "game update": timed(lambda n: OpinionGame(GameConfig(), RngStream(4)).advance(n), int(1e6 * scale)),
}
print(json.dumps({"backend": backend(), "seconds_per_op": res}))
"""


def run(nojit: bool, scale: float) -> dict:
    env = {k: v for k, v in os.environ.items() if k != "STALKER_NOJIT"}
    if nojit:
        env["STALKER_NOJIT"] = "1"
    out = subprocess.run([sys.executable, "-c", WORKER, str(scale)], env=env, check=True,
                         capture_output=True, text=True)
    return json.loads(out.stdout)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scale", type=float, default=1.0, help="workload multiplier for the numba run")
    args = ap.parse_args()
    fast = run(False, args.scale)
    slow = run(True, args.scale / 200)  # the fallback is two to three orders slower
    print(f"{'kernel':<22}{'numba':>14}{'python':>14}{'speedup':>10}")
    for name, t in fast["seconds_per_op"].items():
        s = slow["seconds_per_op"][name]
        print(f"{name:<22}{t * 1e9:>11.1f} ns{s * 1e9:>11.1f} ns{s / t:>9.0f}x")


if __name__ == "__main__":
    main()
