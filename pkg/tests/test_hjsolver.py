import math

import numpy as np
import pytest

from hjrate.engine import PreconditionError
from hjrate.games import make_game_2d, make_game_3d
from hjrate.hjsolver import (THETA_MIN, DissipationBounds, Grid, MomentumBoxError,
                             ScalarField, ScaledHamiltonian, _Evolver, _differences,
                             _numpy_upwind_step, estimate_dissipation, lf_step, micro_grid,
                             solve_corrector_periodic, solve_effective, solve_micro)
from hjrate.torus import experiments_profile

PROF2 = experiments_profile(2)
sq = lambda x, p: np.sum(np.asarray(p) ** 2, axis=-1)
norm = lambda p: np.linalg.norm(p, axis=-1)


def test_dissipation_examples():
    th = estimate_dissipation(sq, [(-1, 1), (-1, 1)])
    assert th.theta == pytest.approx((2.2, 2.2), rel=1e-3)
    flat = estimate_dissipation(lambda x, p: np.zeros(np.broadcast_shapes(x.shape[:-1], p.shape[:-1])),
                                [(-1, 1)] * 2)
    assert flat.theta == (THETA_MIN, THETA_MIN)
    g = make_game_2d()
    th = estimate_dissipation(g.hamiltonian, [(-5, 5), (-5, 5)], x_samples=256)
    assert th.theta[0] >= 1.0
    with pytest.raises(ValueError):
        estimate_dissipation(sq, [(-np.inf, 1), (0, 1)])
    with pytest.raises(FloatingPointError), np.errstate(invalid="ignore"):
        estimate_dissipation(lambda x, p: np.log(p[..., 0]), [(-1, 1)])


def test_linear_step_exact():
    grid = Grid.box(2, 1.0, 20)
    u = grid.points()[..., 0].copy()
    th = estimate_dissipation(sq, [(-2, 2)] * 2)
    dt = th.cfl_dt(grid)
    out = lf_step(ScalarField(grid, u), sq, th, dt)
    np.testing.assert_allclose(out.values, u - dt, atol=1e-14)
    assert out.time == dt


def test_constant_is_fixed_point():
    grid = Grid.torus(2, 16)
    th = DissipationBounds((3.0, 3.0))
    out = lf_step(ScalarField(grid, np.full(grid.shape, 0.7)), sq, th, th.cfl_dt(grid))
    np.testing.assert_array_equal(out.values, 0.7)


def test_cfl_rejected():
    grid = Grid.torus(2, 16)
    th = DissipationBounds((3.0, 3.0))
    with pytest.raises(PreconditionError):
        lf_step(ScalarField(grid, np.zeros(grid.shape)), sq, th, 2 * th.cfl_dt(grid))


def _game_H(x, p):
    return make_game_2d(PROF2).hamiltonian(x * 4.0, p)


@pytest.mark.parametrize("grid", [Grid.torus(2, 12), Grid.box(2, 1.0, 12)], ids=["torus", "box"])
def test_lf_monotone_by_perturbation(grid):
    rng = np.random.default_rng(0)
    th = estimate_dissipation(_game_H, [(-30, 30)] * 2, x_samples=grid.points().reshape(-1, 2))
    dt = th.cfl_dt(grid)
    interior = np.ones(grid.shape, bool)
    if not grid.periodic[0]:
        # ghost extrapolation is not monotone at the edge nodes themselves
        interior[[0, -1], :] = False
        interior[:, [0, -1]] = False
    for _ in range(100):
        u = rng.uniform(-1, 1, grid.shape) * 0.1
        base = lf_step(ScalarField(grid, u), _game_H, th, dt).values
        i = tuple(rng.integers(1, n - 1) for n in grid.shape)
        v = u.copy()
        v[i] += rng.uniform(1e-6, 1e-2)
        bumped = lf_step(ScalarField(grid, v), _game_H, th, dt).values
        assert np.all((bumped - base)[interior] >= -1e-13)
        w = u - rng.uniform(0, 1e-2, grid.shape)
        lower = lf_step(ScalarField(grid, w), _game_H, th, dt).values
        assert np.all((base - lower)[interior] >= -1e-13)


def test_upwind_monotone_by_perturbation():
    rng = np.random.default_rng(1)
    for game, grid in ((make_game_2d(PROF2), micro_grid(0.25, 1.0, 0.25 / 40, 1 / 16)),
                       (make_game_3d(experiments_profile(3)), Grid.torus(3, 10))):
        H = ScaledHamiltonian(game, 0.25 if game.dim == 2 else 1.0)
        coef = H.coefficients(grid)
        th = H.upwind_bounds(coef)
        dt = th.cfl_dt(grid)
        for _ in range(30):
            u = rng.uniform(-1, 1, grid.shape) * grid.h * 5
            base = _numpy_upwind_step(u, grid, H, coef, dt)
            v = u.copy()
            i = tuple(rng.integers(1, n - 1) for n in grid.shape)
            v[i] += rng.uniform(1e-6, 1e-2) * grid.h
            diff = _numpy_upwind_step(v, grid, H, coef, dt) - base
            if not grid.periodic[0]:
                diff = diff[1:-1]
            assert diff.min() >= -1e-12


def test_jit_and_numpy_sweeps_agree():
    grid = micro_grid(0.25, 1.0, 0.25 / 40, 1 / 16)
    H = ScaledHamiltonian(make_game_2d(PROF2), 0.25)
    th = H.upwind_bounds(H.coefficients(grid))
    u = np.minimum(np.abs(grid.points()[..., 0]), 1.0)
    ev = _Evolver(grid, H, th, th.cfl_dt(grid), scheme="upwind")
    ref = _numpy_upwind_step(u, grid, H, ev.coef, ev.dt)
    np.testing.assert_allclose(ev.step(u, np.empty_like(u)), ref, atol=1e-13)


def test_max_principle():
    grid = Grid.box(2, 2.0, 40)
    u0 = lambda x: np.minimum(np.linalg.norm(x, axis=-1), 1.0)
    f = solve_effective(norm, u0, 0.5, grid)
    assert f.values.min() >= -1e-12 and f.values.max() <= 1.0 + 1e-12
    zero = solve_effective(lambda p: np.zeros(p.shape[:-1]), u0, 1.0, grid)
    # only the theta floor's viscosity moves the kinks
    np.testing.assert_allclose(zero.values, u0(grid.points()), atol=4 * THETA_MIN / grid.h)


def test_norm_benchmark_against_hopf_lax():
    L = 4.0
    u0 = lambda x: np.minimum(np.linalg.norm(x, axis=-1), 1.0)
    exact = lambda x: np.minimum(np.maximum(np.linalg.norm(x, axis=-1) - 1.0, 0.0), 1.0)
    errs = []
    for N in (40, 80, 160):
        grid = Grid.box(2, L, N)
        f = solve_effective(norm, u0, 1.0, grid)
        pts = grid.points()
        inside = np.all(np.abs(pts) <= L - 1, axis=-1)
        errs.append(float(np.abs(f.values - exact(pts))[inside].max()))
        assert errs[-1] <= 3 * math.sqrt(grid.h)
        assert abs(f.value_at((0.0, 0.0))) <= 3 * math.sqrt(grid.h)
    for a, b in zip(errs, errs[1:]):
        assert 0.5 <= b / a <= 1.0


def test_corrector_x_independent():
    res = solve_corrector_periodic(sq, (1.0, 0.0), T=1.0, N=16)
    assert res.estimate == pytest.approx(1.0, abs=1e-6)
    res = solve_corrector_periodic(lambda x, p: norm(p) - 0.3, (0.0, 2.0), T=1.0, N=8)
    assert res.estimate == pytest.approx(1.7, abs=1e-6)


def test_corrector_refuses_coarse_torus():
    with pytest.raises(PreconditionError, match="N >= 40"):
        solve_corrector_periodic(make_game_3d(experiments_profile(3)), (1, 0, 0), 0.5, 20)


def test_micro_refusal_message():
    with pytest.raises(PreconditionError, match=r"N >= \d+ points on \[-L, L\]"):
        solve_micro(PROF2, 0.25, h=0.25 * PROF2.width / 2)
    with pytest.raises(PreconditionError, match="half-width"):
        solve_micro(PROF2, 0.25, L=3.0, h_x1=1 / 16)


@pytest.fixture(scope="module")
def micro_quarter():
    return solve_micro(PROF2, 0.25, T=1.0, h_x1=1 / 64)


def test_micro_value_positive(micro_quarter):
    assert micro_quarter.value > 0.0
    # the drift cost is capped by the terminal value
    assert micro_quarter.value <= 1.0


def test_micro_boundary_audit(micro_quarter):
    wider = solve_micro(PROF2, 0.25, T=1.0, L=6.0, h_x1=1 / 64)
    assert wider.value == pytest.approx(micro_quarter.value, abs=1e-10)


def test_zero_data_stays_nonnegative():
    H = ScaledHamiltonian(make_game_2d(PROF2), 0.25)
    grid = micro_grid(0.25, 1.0, 0.25 * PROF2.width / 4, 1 / 16)
    th = H.upwind_bounds(H.coefficients(grid))
    ev = _Evolver(grid, H, th, th.cfl_dt(grid), scheme="upwind")
    u = ev.run(np.zeros(grid.shape), 200)
    assert u.min() >= 0.0


def test_momentum_box_overflow():
    grid = Grid.box(1, 1.0, 20)
    u0 = lambda x: 10.0 * x[..., 0]
    from hjrate.effective import EffectiveHTable
    table = EffectiveHTable.tabulate(norm, dim=1, box=3.0, n=13)
    with pytest.raises(MomentumBoxError):
        solve_effective(table, u0, 0.1, grid)


def test_differences_linear_ghosts():
    grid = Grid.box(1, 1.0, 10)
    u = 3.0 * grid.points()[..., 0]
    dps, dms = _differences(u, grid)
    np.testing.assert_allclose(dps[0], 3.0)
    np.testing.assert_allclose(dms[0], 3.0)


def test_field_csv_and_binary_roundtrip(tmp_path):
    grid = micro_grid(0.25, 1.0, 0.25 / 8, 0.25)
    vals = np.random.default_rng(2).normal(size=grid.shape)
    f = ScalarField(grid, vals, 0.75)
    f.to_binary(tmp_path / "f.bin")
    g = ScalarField.from_binary(tmp_path / "f.bin")
    assert g.grid == grid and g.time == 0.75
    assert g.values.tobytes() == vals.tobytes()
    f.to_csv(tmp_path / "f.csv")
    lines = (tmp_path / "f.csv").read_text().splitlines()
    assert lines[0] == "i0,i1,value"
    assert len(lines) == grid.size + 1
    i0, i1, v = lines[5].split(",")
    assert float(v) == vals[int(i0), int(i1)]
    (tmp_path / "bad.bin").write_bytes(b"NOPE")
    with pytest.raises(ValueError):
        ScalarField.from_binary(tmp_path / "bad.bin")


def test_field_rejects_nan():
    grid = Grid.torus(1, 4)
    with pytest.raises(FloatingPointError):
        ScalarField(grid, np.array([0.0, np.nan, 0.0, 0.0]))


def test_grid_interpolation():
    grid = Grid.torus(2, 8)
    pts = grid.points()
    vals = np.sin(2 * np.pi * pts[..., 0])
    assert grid.interpolate(vals, [[1.125, 0.3]])[0] == pytest.approx(vals[1, 0])
    box = Grid.box(2, 1.0, 4)
    lin = box.points() @ np.array([2.0, -1.0])
    assert box.interpolate(lin, [[0.3, -0.7]])[0] == pytest.approx(1.3)
    with pytest.raises(ValueError):
        box.interpolate(lin, [[1.5, 0.0]])
