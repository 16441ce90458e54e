import csv
import itertools
import math

import numpy as np
import pytest

from hjrate.engine import (PreconditionError, corrector_game, corrector_value_game, diagnostics,
                           family_costs, integrate, lower_value_estimate, upper_value_estimate)
from hjrate.games import make_game_2d, make_game_3d
from hjrate.policies import PolicyI, PolicyII, baseline_families
from hjrate.torus import experiments_profile

G2 = make_game_2d()
EPS = 1e-4


@pytest.fixture(scope="module")
def highway_runs():
    _, pii = baseline_families(seed=3)
    return {str(b): integrate(G2, EPS, PolicyI("highway"), b) for b in pii}


def test_stay_vs_zero():
    tr = integrate(G2, EPS, PolicyI("stay"), PolicyII("zero"))
    assert tr.total_cost == 0.0
    np.testing.assert_array_equal(tr.final_state, [0, 0])


def test_constant_action_off_highway():
    eps, T = 0.01, 0.5
    tr = integrate(G2, eps, PolicyI("constant", (1.0, 0.0)), PolicyII("zero"), T=T,
                   x0=(0.0, eps / 4))
    np.testing.assert_allclose(tr.states[:, 0], 2 * tr.t, atol=1e-12)
    np.testing.assert_allclose(tr.states[:, 1], eps / 4, atol=1e-15)
    assert tr.running_cost == pytest.approx(200 * T, rel=1e-12)
    assert tr.terminal_cost == pytest.approx(1.0)


def test_richardson_ratio():
    g = make_game_2d(experiments_profile(2))
    costs = [integrate(g, 1.0, PolicyI("constant", (0.0, 0.6)), PolicyII("zero"), T=0.5,
                       dt=dt, x0=(0.0, -0.2), record=False).running_cost
             for dt in (1 / 256, 1 / 512, 1 / 1024)]
    ratio = (costs[0] - costs[1]) / (costs[1] - costs[2])
    assert ratio == pytest.approx(4.0, abs=0.5)


def test_dt_precondition():
    with pytest.raises(PreconditionError):
        integrate(G2, EPS, PolicyI("stay"), PolicyII("zero"), dt=EPS)
    with pytest.raises(PreconditionError):
        integrate(G2, 0.0, PolicyI("stay"), PolicyII("zero"))
    with pytest.raises(PreconditionError):
        integrate(make_game_3d(), EPS, PolicyI("stay"), PolicyII("zero"))


def test_highway_total_cost_bracket(highway_runs):
    r = math.sqrt(EPS)
    for name, tr in highway_runs.items():
        assert tr.total_cost <= 52 * r, name
        assert tr.terminal_cost <= 2 * r + 1e-12, name
    assert highway_runs["adversarial"].total_cost >= r / 35


def test_highway_invariant_box(highway_runs):
    delta = 1e-9
    for name, tr in highway_runs.items():
        lo2, hi2 = tr.x2_range
        lo1, hi1 = tr.x1_range
        assert -delta <= lo2 and hi2 <= EPS / 2 + delta, name
        assert lo1 >= -EPS / 4 - delta and hi1 <= math.sqrt(EPS) + EPS / 4 + delta, name


def test_highway_phase_costs(highway_runs):
    for name, tr in highway_runs.items():
        assert tr.wait_cost <= 1e-9, name
        assert tr.max_move_phase_cost <= 50 * EPS * (1 + 1e-9), name


def test_trajectory_consistency(highway_runs):
    for tr in highway_runs.values():
        assert tr.running[-1] == pytest.approx(tr.running_cost, rel=1e-9)
        u = min(abs(tr.states[-1, 0]), 1.0)
        assert tr.terminal_cost == pytest.approx(u, rel=1e-9, abs=1e-15)
        assert tr.total_cost == pytest.approx(tr.running[-1] + u, rel=1e-9)
        assert tr.t[-1] == pytest.approx(1.0)
        step = np.linalg.norm(np.diff(tr.states, axis=0), axis=1)
        assert np.all(step <= G2.speed_bound * np.diff(tr.t) + 1e-15)
        assert tr.max_speed <= 3.0 + 1e-12


def test_diagnostics_partition_and_switches(highway_runs):
    tr = highway_runs["adversarial"]
    d = diagnostics(tr)
    assert d.total_time == pytest.approx(1.0, abs=1e-9)
    assert tr.running_cost >= d.measure_E
    r = 1 / math.sqrt(EPS)
    assert r / 6 - 1 <= d.switch_count <= 4 * r
    assert tr.summary.switch_count == d.switch_count


def test_diagnostics_at_rest():
    tr = integrate(G2, EPS, PolicyI("stay"), PolicyII("zero"), T=0.7)
    d = diagnostics(tr)
    assert (d.measure_E, d.measure_U_minus) == (0.0, 0.0)
    assert d.measure_U_plus == pytest.approx(0.7)


def test_cost_dominates_E_over_pairings():
    pi, _ = baseline_families()
    pi = pi + [PolicyI("constant", (0.3, 0.4)), PolicyI("constant", (0.0, 1.0))]
    pii = [PolicyII("adversarial"), PolicyII("zero"), PolicyII("push")] + \
          [PolicyII("random", s) for s in range(7)]
    pairs = list(itertools.product(pi, pii))
    assert len(pairs) == 50
    for a, b in pairs:
        tr = integrate(G2, 1e-2, a, b)
        assert tr.running_cost >= diagnostics(tr).measure_E - 1e-9, (str(a), str(b))
        assert tr.max_speed <= 3.0 + 1e-12


def test_stay_is_dragged_out():
    tr = integrate(G2, EPS, PolicyI("stay"), PolicyII("adversarial"))
    assert tr.terminal_cost >= 2 * math.sqrt(EPS)


def test_value_brackets():
    for eps in (4.0 ** -5, 4.0 ** -6):
        up = upper_value_estimate(eps)
        lo = lower_value_estimate(eps)
        assert up >= lo
        r = math.sqrt(eps)
        assert r / 35 <= lo and up <= 52 * r
    assert upper_value_estimate(2.0 ** -10) <= 1.625
    assert upper_value_estimate(2.0 ** -10, [PolicyII("zero")]) == 0.0
    with pytest.raises(ValueError):
        upper_value_estimate(1e-2, [])
    with pytest.raises(ValueError):
        lower_value_estimate(1e-2, [])


def test_family_costs_keys():
    costs = family_costs(1e-2, [PolicyI("stay")], [PolicyII("zero"), PolicyII("random", 2)])
    assert set(costs) == {("stay", "zero"), ("stay", "random:2")}


def test_corrector_values():
    g3 = make_game_3d()
    assert corrector_value_game(g3, (0, 0, 0), T=20) == pytest.approx(0.0, abs=1e-9)
    half = corrector_value_game(g3, (0.5, 0, 0), T=100)
    assert abs(half) <= 2 / 100 * 0.5
    res = corrector_game(g3, (1, 0, 0), T=100)
    assert res.estimate == pytest.approx(200.0, rel=0.05)
    for stats in res.per_policy.values():
        assert stats["max_speed"] <= 400 + math.sqrt(3) + 1e-9
    with pytest.raises(PreconditionError):
        corrector_value_game(g3, (1, 0, 0), T=5)
    with pytest.raises(PreconditionError):
        corrector_value_game(G2, (1, 0), T=20)


def test_trajectory_csv(tmp_path):
    tr = integrate(G2, 1e-2, PolicyI("highway"), PolicyII("adversarial"), T=0.1)
    path = tmp_path / "traj.csv"
    tr.to_csv(path)
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "x1", "x2", "a1", "a2", "b1", "b2", "running_cost"]
    assert len(rows) == len(tr.t) + 1
    assert float(rows[-1][-1]) == tr.running[-1]
