"""Time the numba and numpy backends on the two hot paths.

Each backend runs in its own interpreter because the switch is read at
import time. The numba timings exclude compilation (one warm-up call).

    python benchmarks/bench_backends.py [--repeat 3]
"""

import argparse
import json
import os
import subprocess
import sys

CHILD = r"""
import json, time
import numpy as np
from hjrate import _jit
from hjrate.engine import integrate
from hjrate.games import make_game_2d
from hjrate.hjsolver import ScaledHamiltonian, _Evolver, micro_grid
from hjrate.policies import PolicyI, PolicyII
from hjrate.torus import experiments_profile

repeat = {repeat}
out = {{"backend": _jit.backend_name()}}

# game kernel: highway vs adversarial, eps = 1e-2, 2e4 steps
spec = make_game_2d()
run = lambda: integrate(spec, 1e-2, PolicyI("highway"), PolicyII("adversarial"), record=False)
run()
best = min((lambda t0: (run(), time.perf_counter() - t0)[1])(time.perf_counter())
           for _ in range(repeat))
out["game_seconds"] = best
out["game_cost"] = run().total_cost

# upwind sweep on the micro grid, 20 steps
prof = experiments_profile(2)
grid = micro_grid(0.25, 5.0, 0.25 * prof.width / 4, 1 / 64)
H = ScaledHamiltonian(make_game_2d(prof), 0.25)
theta = H.upwind_bounds(H.coefficients(grid))
ev = _Evolver(grid, H, theta, theta.cfl_dt(grid), scheme="upwind")
u0 = np.minimum(np.abs(grid.points()[..., 0]), 1.0)
ev.run(u0, 1)
best = min((lambda t0: (ev.run(u0, 20), time.perf_counter() - t0)[1])(time.perf_counter())
           for _ in range(repeat))
out["sweep_seconds"] = best
out["sweep_checksum"] = float(ev.run(u0, 20).sum())
print(json.dumps(out))
"""


def run_backend(disable_jit: bool, repeat: int) -> dict:
    env = dict(os.environ)
    env["HJRATE_DISABLE_JIT"] = "1" if disable_jit else "0"
    res = subprocess.run([sys.executable, "-c", CHILD.format(repeat=repeat)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(res.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    fast = run_backend(False, args.repeat)
    slow = run_backend(True, args.repeat)
    for key in ("game", "sweep"):
        a, b = fast[f"{key}_seconds"], slow[f"{key}_seconds"]
        print(f"{key:6s} numba {a:9.4f}s  numpy {b:9.4f}s  speedup {b / a:7.1f}x")
    print(f"game cost   numba {fast['game_cost']!r}  numpy {slow['game_cost']!r}")
    print(f"sweep check numba {fast['sweep_checksum']!r}  numpy {slow['sweep_checksum']!r}")


if __name__ == "__main__":
    main()
