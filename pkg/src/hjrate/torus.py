"""Periodic bump profiles and the 3D highway lattice.

The cutoff is the standard smooth bump

    phi(x) = exp(1 - 1 / (1 - (xbar / w)**2))   for |xbar| < w, else 0,

with ``xbar`` the representative of ``x`` in [-1/2, 1/2). The 3D lattice
consists of the lines

    l1 = R x {0} x {0},   l2 = {0} x R x {1/4},   l3 = {1/4} x {1/4} x R

and their integer translates. Scalar ``*_s`` functions are numba kernels
shared with the game integrator and the PDE sweeps; the public functions
are numpy-vectorized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.optimize import minimize_scalar

from ._jit import jit

THIN_WIDTH = 1.0 / 100.0
EXPERIMENT_WIDTH = {2: 1.0 / 8.0, 3: 1.0 / 10.0}

# (axis along the line, transverse axes, transverse offsets) for l1, l2, l3
LINE_AXIS = (0, 1, 2)
LINE_TRANSVERSE = ((1, 2), (0, 2), (0, 1))
LINE_OFFSET = ((0.0, 0.0), (0.0, 0.25), (0.25, 0.25))


@dataclass(frozen=True)
class BumpProfile:
    """Smooth periodic cutoff of half-width ``width`` (support |xbar| < width)."""

    width: float
    name: str = "custom"

    def __post_init__(self):
        if not (0.0 < self.width < 0.5):
            raise ValueError(f"bump width must lie in (0, 1/2), got {self.width}")

    @cached_property
    def derivative_bound(self) -> float:
        """Sup of |phi'| over the circle, from the closed-form derivative."""
        def neg(s):
            q = 1.0 - s * s
            return -math.exp(1.0 - 1.0 / q) * 2.0 * s / (q * q)

        res = minimize_scalar(neg, bounds=(1e-9, 1.0 - 1e-9), method="bounded",
                              options={"xatol": 1e-12})
        return -res.fun / self.width


def paper_profile() -> BumpProfile:
    return BumpProfile(THIN_WIDTH, "paper")


def experiments_profile(dim: int) -> BumpProfile:
    return BumpProfile(EXPERIMENT_WIDTH[dim], "experiments")


def profile_by_name(name: str, dim: int) -> BumpProfile:
    if name == "paper":
        return paper_profile()
    if name == "experiments":
        return experiments_profile(dim)
    raise ValueError(f"unknown profile {name!r} (expected 'paper' or 'experiments')")


# ---------------------------------------------------------------- kernels

@jit
def wrap_s(x):
    return x - math.floor(x + 0.5)


@jit
def bump_radial_s(r, w):
    s = r / w
    if s >= 1.0 or s <= -1.0:
        return 0.0
    return math.exp(1.0 - 1.0 / (1.0 - s * s))


@jit
def bump_s(x, w):
    return bump_radial_s(wrap_s(x), w)


@jit
def line_dist_s(x0, x1, x2, i):
    if i == 0:
        u = wrap_s(x1)
        v = wrap_s(x2)
    elif i == 1:
        u = wrap_s(x0)
        v = wrap_s(x2 - 0.25)
    else:
        u = wrap_s(x0 - 0.25)
        v = wrap_s(x1 - 0.25)
    return math.sqrt(u * u + v * v)


@jit
def phi3_s(x0, x1, x2, w):
    return (bump_radial_s(line_dist_s(x0, x1, x2, 0), w),
            bump_radial_s(line_dist_s(x0, x1, x2, 1), w),
            bump_radial_s(line_dist_s(x0, x1, x2, 2), w))


# ------------------------------------------------------------- vectorized

def wrap(x):
    x = np.asarray(x, dtype=float)
    return x - np.floor(x + 0.5)


def bump_radial(r, width: float):
    s = np.asarray(r, dtype=float) / width
    inside = np.abs(s) < 1.0
    q = np.where(inside, 1.0 - s * s, 1.0)
    return np.where(inside, np.exp(1.0 - 1.0 / q), 0.0)


def bump_eval(x, profile: BumpProfile):
    """Periodized bump value; exactly 0 outside the support."""
    return bump_radial(wrap(x), profile.width)


def dist_to_line_lattice(x, i: int):
    """Distance from ``x`` (shape (..., 3)) to l_i + Z^3, ``i`` in {1, 2, 3}."""
    if i not in (1, 2, 3):
        raise ValueError(f"line index must be 1, 2 or 3, got {i}")
    x = np.asarray(x, dtype=float)
    ja, jb = LINE_TRANSVERSE[i - 1]
    oa, ob = LINE_OFFSET[i - 1]
    u = wrap(x[..., ja] - oa)
    v = wrap(x[..., jb] - ob)
    return np.hypot(u, v)


def phi_vec_3d(x, profile: BumpProfile):
    """(phi1, phi2, phi3) at ``x``; last axis of the result has length 3."""
    x = np.asarray(x, dtype=float)
    return np.stack([bump_radial(dist_to_line_lattice(x, i), profile.width)
                     for i in (1, 2, 3)], axis=-1)


def phi_total_3d(x, profile: BumpProfile):
    """phi = phi1 + phi2 + phi3."""
    return phi_vec_3d(x, profile).sum(axis=-1)


@dataclass(frozen=True)
class HighwayLattice:
    """The three line families and the half-shift used by the 3D example."""

    shift: tuple = (0.5, 0.5, 0.5)
    axes: tuple = LINE_AXIS
    transverse: tuple = LINE_TRANSVERSE
    offsets: tuple = field(default=LINE_OFFSET)

    def distance(self, x, i: int, shifted: bool = False):
        x = np.asarray(x, dtype=float)
        if shifted:
            x = x + np.asarray(self.shift)
        return dist_to_line_lattice(x, i)

    def nearest_point(self, x, i: int, shifted: bool = False):
        """Closest point of l_i + Z^3 (or of its half-shift) to ``x``."""
        x = np.array(x, dtype=float)
        ja, jb = self.transverse[i - 1]
        oa, ob = self.offsets[i - 1]
        s = 0.5 if shifted else 0.0
        out = x.copy()
        out[..., ja] -= wrap(x[..., ja] - oa + s)
        out[..., jb] -= wrap(x[..., jb] - ob + s)
        return out
