"""The numba kernels and the numpy fallback must agree bit-for-bit or to
round-off; each backend runs in its own interpreter."""

import json
import os
import subprocess
import sys

import pytest

CHILD = r"""
import json
import numpy as np
from hjrate import _jit
from hjrate.engine import corrector_game, integrate
from hjrate.games import make_game_2d, make_game_3d
from hjrate.hjsolver import solve_micro
from hjrate.policies import PolicyI, PolicyII
from hjrate.torus import experiments_profile

out = {"backend": _jit.backend_name()}
tr = integrate(make_game_2d(), 1e-2, PolicyI("highway"), PolicyII("random", 4), T=0.3)
out["game"] = [tr.running_cost, tr.terminal_cost, *tr.final_state.tolist()]
out["corrector"] = corrector_game(make_game_3d(), (1.0, 0.3, 0.0), T=10.0, dt=2e-3).estimate
sol = solve_micro(experiments_profile(2), 0.25, T=0.05, h_x1=1 / 16)
out["micro"] = [sol.value, float(sol.field.values.sum())]
print(json.dumps(out))
"""


def _run(disable):
    env = dict(os.environ, HJRATE_DISABLE_JIT="1" if disable else "0")
    res = subprocess.run([sys.executable, "-c", CHILD], env=env, capture_output=True, text=True,
                         check=True)
    return json.loads(res.stdout.strip().splitlines()[-1])


def test_backends_agree():
    fast, slow = _run(False), _run(True)
    assert fast["backend"] == "numba" and slow["backend"] == "numpy"
    assert fast["game"] == pytest.approx(slow["game"], rel=1e-12, abs=1e-15)
    assert fast["corrector"] == pytest.approx(slow["corrector"], rel=1e-10)
    assert fast["micro"] == pytest.approx(slow["micro"], rel=1e-12)
