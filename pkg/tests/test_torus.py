import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hjrate.torus import (BumpProfile, HighwayLattice, bump_eval, dist_to_line_lattice,
                          experiments_profile, paper_profile, phi_total_3d, phi_vec_3d,
                          profile_by_name)

THIN = paper_profile()
reals = st.floats(-50, 50, allow_nan=False)


def brute_distance(x, i):
    """Minimum over translates in {-2..2}^3 of the distance to l_i."""
    base, axis = [((0, 0, 0), 0), ((0, 0, 0.25), 1), ((0.25, 0.25, 0), 2)][i - 1]
    best = math.inf
    for z in itertools.product(range(-2, 3), repeat=3):
        d = np.asarray(x, float) - np.asarray(base) - np.asarray(z)
        d[axis] = 0.0
        best = min(best, float(np.linalg.norm(d)))
    return best


def test_bump_examples():
    assert bump_eval(0.0, THIN) == 1.0
    assert bump_eval(1.0, THIN) == 1.0
    assert bump_eval(THIN.width / 2, THIN) == pytest.approx(math.exp(-1 / 3), abs=1e-15)
    assert bump_eval(THIN.width / 2, THIN) == pytest.approx(0.716531, abs=1e-6)
    assert bump_eval(0.3, THIN) == 0.0


def test_profiles():
    assert THIN.width == 0.01
    assert experiments_profile(2).width == 1 / 8
    assert experiments_profile(3).width == 1 / 10
    assert profile_by_name("experiments", 3).width == 1 / 10
    with pytest.raises(ValueError):
        profile_by_name("nope", 2)
    for bad in (0.0, 0.5, -1.0):
        with pytest.raises(ValueError):
            BumpProfile(bad)


@given(reals, st.integers(-20, 20))
def test_bump_periodic_even_bounded(x, z):
    v = bump_eval(x, THIN)
    assert 0.0 <= v <= 1.0
    assert bump_eval(x + z, THIN) == pytest.approx(v, abs=1e-12)
    assert bump_eval(-x, THIN) == pytest.approx(v, abs=1e-12)


def test_bump_support_exact_zero():
    w = THIN.width
    x = np.linspace(w, 1 - w, 10001)
    assert np.all(bump_eval(x, THIN) == 0.0)


def test_derivative_bound_audit():
    for prof in (THIN, experiments_profile(2)):
        x = np.random.default_rng(0).uniform(-0.5, 0.5, 10_000)
        d = 1e-7
        fd = np.abs(bump_eval(x + d, prof) - bump_eval(x - d, prof)) / (2 * d)
        assert fd.max() <= prof.derivative_bound * (1 + 1e-6)
        # the bound is attained, not just an upper estimate
        assert fd.max() >= 0.95 * prof.derivative_bound or prof.width > 0.05


def test_distance_examples():
    assert dist_to_line_lattice((0.7, 0, 0), 1) == 0.0
    assert dist_to_line_lattice((0.5, 0.5, 0.5), 1) == pytest.approx(0.707107, abs=1e-6)
    assert dist_to_line_lattice((0.5, 0.5, 0.5), 1) == pytest.approx(
        brute_distance((0.5, 0.5, 0.5), 1), abs=1e-15)
    assert dist_to_line_lattice((0.25, 0.25, 0.9), 3) == 0.0
    with pytest.raises(ValueError):
        dist_to_line_lattice((0, 0, 0), 4)


@given(st.tuples(st.floats(-1.5, 1.5), st.floats(-1.5, 1.5), st.floats(-1.5, 1.5)),
       st.sampled_from([1, 2, 3]))
def test_distance_matches_translate_enumeration(x, i):
    assert dist_to_line_lattice(x, i) == pytest.approx(brute_distance(x, i), abs=1e-12)


def test_phi_vec_examples():
    np.testing.assert_array_equal(phi_vec_3d((0, 0, 0), THIN), [1, 0, 0])
    np.testing.assert_array_equal(phi_vec_3d((0.5, 0.5, 0.5), THIN), [0, 0, 0])
    np.testing.assert_array_equal(phi_vec_3d((0, 0.3, 0.25), THIN), [0, 1, 0])
    assert phi_total_3d((0, 0.3, 0.25), THIN) == 1.0


def test_periodicity_bulk():
    rng = np.random.default_rng(1)
    x = rng.uniform(-3, 3, (10_000, 3))
    z = rng.integers(-5, 6, (10_000, 3))
    for prof in (THIN, experiments_profile(3)):
        np.testing.assert_allclose(phi_vec_3d(x + z, prof), phi_vec_3d(x, prof), atol=1e-12)


def test_support_disjointness():
    rng = np.random.default_rng(2)
    # sample near every line as well as uniformly
    lat = HighwayLattice()
    x = rng.random((20_000, 3))
    near = []
    for i in (1, 2, 3):
        for shifted in (False, True):
            y = lat.nearest_point(rng.random((2000, 3)), i, shifted)
            near.append(y + rng.normal(scale=0.005, size=y.shape))
    x = np.concatenate([x, *near])
    vals = np.concatenate([phi_vec_3d(x, THIN), phi_vec_3d(x + 0.5, THIN)], axis=-1)
    assert np.all(np.count_nonzero(vals, axis=-1) <= 1)
    y = rng.random(100_000)
    two = np.stack([bump_eval(y, THIN), bump_eval(y + 0.5, THIN)], -1)
    assert np.all(np.count_nonzero(two, axis=-1) <= 1)


def test_line_separation_sampled():
    """Distinct lines of the lattice and its half-shift are >= 1/4 apart."""
    lat = HighwayLattice()
    t = np.linspace(0, 1, 401)
    worst = math.inf
    for i in (1, 2, 3):
        for si in (False, True):
            pts = np.zeros((len(t), 3))
            ax = i - 1
            pts[:, ax] = t
            pts = lat.nearest_point(pts, i, si)
            pts[:, ax] = t
            for j in (1, 2, 3):
                for sj in (False, True):
                    if (i, si) == (j, sj):
                        continue
                    worst = min(worst, float(lat.distance(pts, j, sj).min()))
    assert worst >= 0.25 - 1e-12


def test_nearest_point_lies_on_line():
    lat = HighwayLattice()
    x = np.random.default_rng(3).uniform(-2, 2, (500, 3))
    for i in (1, 2, 3):
        for shifted in (False, True):
            y = lat.nearest_point(x, i, shifted)
            assert np.all(lat.distance(y, i, shifted) < 1e-12)
            np.testing.assert_allclose(np.linalg.norm(y - x, axis=-1),
                                       lat.distance(x, i, shifted), atol=1e-12)
