"""The two example games, their closed-form Hamiltonians and a brute-force
min-max oracle.

Both games share the initial data u0(x) = min(|x_1|, 1). The Hamiltonian of
a game is

    H(x, p) = -min_{a in A} max_{b in B} [R(x, a, b) + p . f(x, a, b)],

and the closed forms below are that expression with the ball minimization
done radially. ``hamiltonian_minmax_oracle`` evaluates the same expression
by enumeration and is only used for auditing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._jit import jit
from .torus import (BumpProfile, bump_eval, bump_s, paper_profile,
                    phi_vec_3d, phi3_s)


def u0(x):
    """min(|x_1|, 1) for points stacked on the last axis."""
    x = np.asarray(x, dtype=float)
    return np.minimum(np.abs(x[..., 0]), 1.0)


@dataclass(frozen=True)
class GameSpec:
    dim: int
    radius_a: float
    profile: BumpProfile

    # B is a box [0, 1] along these axes and {0} along the others
    b_axes: tuple = ()

    def u0(self, x):
        return u0(x)

    def running_cost(self, x, a, b):
        raise NotImplementedError

    def transition(self, x, a, b):
        raise NotImplementedError

    def hamiltonian(self, x, p):
        raise NotImplementedError

    @property
    def cost_bound(self) -> float:
        raise NotImplementedError

    @property
    def speed_bound(self) -> float:
        raise NotImplementedError


class Game2D(GameSpec):
    """Horizontal highways at heights Z and Z + 1/2 (unit cell)."""

    def _phis(self, x):
        y = np.asarray(x, dtype=float)[..., 1]
        return bump_eval(y, self.profile), bump_eval(y + 0.5, self.profile)

    def running_cost(self, x, a, b):
        pa, pb = self._phis(x)
        a = np.asarray(a, dtype=float)
        return 100.0 * (1.0 - pa - pb) + 100.0 * np.sum(a * a, axis=-1)

    def transition(self, x, a, b):
        pa, pb = self._phis(x)
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        return 2.0 * a + b * (pa - pb)[..., None]

    def hamiltonian(self, x, p):
        pa, pb = self._phis(x)
        p = np.asarray(p, dtype=float)
        r = np.sqrt(np.sum(p * p, axis=-1))
        ball = np.where(r <= 100.0, -r * r / 100.0, 100.0 - 2.0 * r)
        push = np.maximum(0.0, p[..., 0] * (pa - pb))
        return -100.0 * (1.0 - pa - pb) - ball - push

    @property
    def cost_bound(self) -> float:
        return 200.0 + 100.0 * self.radius_a ** 2

    @property
    def speed_bound(self) -> float:
        return 2.0 * self.radius_a + 1.0


class Game3D(GameSpec):
    """Lattice of highway lines along all three axes, plus its half-shift."""

    def _phis(self, x):
        x = np.asarray(x, dtype=float)
        return phi_vec_3d(x, self.profile), phi_vec_3d(x + 0.5, self.profile)

    def running_cost(self, x, a, b):
        va, vb = self._phis(x)
        big = va.sum(axis=-1) + vb.sum(axis=-1)
        a = np.asarray(a, dtype=float)
        return 100.0 * (1.0 - big) + 100.0 * np.sqrt(np.sum(a * a, axis=-1))

    def transition(self, x, a, b):
        va, vb = self._phis(x)
        big = va.sum(axis=-1) + vb.sum(axis=-1)
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        return 2.0 * (1.0 + 99.0 * big)[..., None] * a + b * (va - vb)

    def hamiltonian(self, x, p):
        va, vb = self._phis(x)
        big = va.sum(axis=-1) + vb.sum(axis=-1)
        p = np.asarray(p, dtype=float)
        r = np.sqrt(np.sum(p * p, axis=-1))
        ball = np.minimum(0.0, 200.0 - 4.0 * (1.0 + 99.0 * big) * r)
        push = np.sum(np.maximum(0.0, p * (va - vb)), axis=-1)
        return -100.0 * (1.0 - big) - ball - push

    @property
    def cost_bound(self) -> float:
        return 200.0 + 100.0 * self.radius_a

    @property
    def speed_bound(self) -> float:
        return 2.0 * (1.0 + 99.0 * 3.0) * self.radius_a + math.sqrt(3.0)


def make_game_2d(profile: BumpProfile | None = None) -> Game2D:
    return Game2D(dim=2, radius_a=1.0, profile=profile or paper_profile(), b_axes=(0,))


def make_game_3d(profile: BumpProfile | None = None) -> Game3D:
    return Game3D(dim=3, radius_a=2.0, profile=profile or paper_profile(), b_axes=(0, 1, 2))


def hamiltonian_closed_form_2d(x, p, profile: BumpProfile | None = None):
    return make_game_2d(profile).hamiltonian(x, p)


def hamiltonian_closed_form_3d(x, p, profile: BumpProfile | None = None):
    return make_game_3d(profile).hamiltonian(x, p)


# ------------------------------------------------------- scalar kernels

@jit
def ball_term_2d_s(p1, p2):
    r = math.sqrt(p1 * p1 + p2 * p2)
    if r <= 100.0:
        return -r * r / 100.0
    return 100.0 - 2.0 * r


@jit
def hamiltonian_2d_s(x2, p1, p2, w):
    pa = bump_s(x2, w)
    pb = bump_s(x2 + 0.5, w)
    push = p1 * (pa - pb)
    if push < 0.0:
        push = 0.0
    return -100.0 * (1.0 - pa - pb) - ball_term_2d_s(p1, p2) - push


@jit
def hamiltonian_3d_s(x0, x1, x2, p0, p1, p2, w):
    a0, a1, a2 = phi3_s(x0, x1, x2, w)
    b0, b1, b2 = phi3_s(x0 + 0.5, x1 + 0.5, x2 + 0.5, w)
    big = a0 + a1 + a2 + b0 + b1 + b2
    r = math.sqrt(p0 * p0 + p1 * p1 + p2 * p2)
    ball = 200.0 - 4.0 * (1.0 + 99.0 * big) * r
    if ball > 0.0:
        ball = 0.0
    return (-100.0 * (1.0 - big) - ball - max(0.0, p0 * (a0 - b0))
            - max(0.0, p1 * (a1 - b1)) - max(0.0, p2 * (a2 - b2)))


# --------------------------------------------------------------- oracle

def action_grid_a(spec: GameSpec, res: int) -> np.ndarray:
    """Polar (2D) or spherical (3D) grid of the ball A, extremes on-grid."""
    radii = np.linspace(0.0, spec.radius_a, res)
    if spec.dim == 2:
        ang = 2.0 * np.pi * np.arange(res) / res
        dirs = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    else:
        pol = np.linspace(0.0, np.pi, res)
        azi = 2.0 * np.pi * np.arange(res) / res
        P, Z = np.meshgrid(pol, azi, indexing="ij")
        dirs = np.stack([np.sin(P) * np.cos(Z), np.sin(P) * np.sin(Z), np.cos(P)],
                        axis=-1).reshape(-1, 3)
    return (radii[:, None, None] * dirs[None, :, :]).reshape(-1, spec.dim)


def action_grid_b(spec: GameSpec, res: int) -> np.ndarray:
    t = np.linspace(0.0, 1.0, res)
    free = len(spec.b_axes)
    mesh = np.stack(np.meshgrid(*([t] * free), indexing="ij"), axis=-1).reshape(-1, free)
    out = np.zeros((mesh.shape[0], spec.dim))
    out[:, list(spec.b_axes)] = mesh
    return out


def minmax_both(spec: GameSpec, x, p, res: int, chunk: int = 1 << 23):
    """(upper, lower) Hamiltonians by enumeration over the discretized A x B."""
    if res < 2:
        raise ValueError(f"oracle resolution must be >= 2, got {res}")
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    A = action_grid_a(spec, res)
    B = action_grid_b(spec, res)
    rows = max(1, chunk // len(B))
    best_upper = np.inf
    col_min = np.full(len(B), np.inf)
    for s in range(0, len(A), rows):
        a = A[s:s + rows][:, None, :]
        b = B[None, :, :]
        pay = spec.running_cost(x, a, b) + spec.transition(x, a, b) @ p
        best_upper = min(best_upper, pay.max(axis=1).min())
        np.minimum(col_min, pay.min(axis=0), out=col_min)
    return -best_upper, -col_min.max()


def hamiltonian_minmax_oracle(spec: GameSpec, x, p, res: int, order: str = "upper") -> float:
    upper, lower = minmax_both(spec, x, p, res)
    if order == "upper":
        return upper
    if order == "lower":
        return lower
    raise ValueError(f"order must be 'upper' or 'lower', got {order!r}")


def _sphere_directions(dim: int, n: int) -> np.ndarray:
    if dim == 2:
        ang = 2.0 * np.pi * np.arange(n) / n
        return np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    # Fibonacci sphere plus the coordinate axes
    k = np.arange(n) + 0.5
    z = 1.0 - 2.0 * k / n
    rho = np.sqrt(1.0 - z * z)
    th = np.pi * (1.0 + 5.0 ** 0.5) * k
    fib = np.stack([rho * np.cos(th), rho * np.sin(th), z], axis=-1)
    return np.concatenate([fib, np.eye(3), -np.eye(3)])


def _x_samples(spec: GameSpec, n: int) -> np.ndarray:
    if spec.dim == 2:
        y = np.concatenate([np.arange(n) / n, [0.0, 0.5, spec.profile.width / 2]])
        return np.stack([np.zeros_like(y), y], axis=-1)
    g = np.arange(n) / n
    cube = np.stack(np.meshgrid(g, g, g, indexing="ij"), axis=-1).reshape(-1, 3)
    on_lines = np.array([[0.3, 0, 0], [0, 0.3, 0.25], [0.25, 0.25, 0.3],
                         [0.3, 0.5, 0.5], [0.5, 0.8, 0.75], [0.75, 0.75, 0.8]])
    return np.concatenate([cube, on_lines])


def coercivity_probe(spec: GameSpec, radii, n_x: int | None = None, n_dir: int = 64) -> list[float]:
    """Sampled min over x and |p| = r of H(x, p), one entry per radius."""
    radii = [float(r) for r in radii]
    if any(r <= 0 for r in radii) or any(b <= a for a, b in zip(radii, radii[1:])):
        raise ValueError("radii must be positive and strictly increasing")
    xs = _x_samples(spec, n_x or (256 if spec.dim == 2 else 10))
    dirs = _sphere_directions(spec.dim, n_dir)
    out = []
    for r in radii:
        H = spec.hamiltonian(xs[:, None, :], r * dirs[None, :, :])
        out.append(float(H.min()))
    return out


@dataclass
class IsaacsRecord:
    x: np.ndarray
    p: np.ndarray
    upper: float
    lower: float
    refinement_delta: float
    closed_form: float

    @property
    def gap(self) -> float:
        return abs(self.upper - self.lower)

    @property
    def closed_form_error(self) -> float:
        return abs(self.closed_form - self.upper)


def isaacs_audit(spec: GameSpec, samples: int, res: int, seed: int = 0,
                 p_max: float = 20.0) -> list[IsaacsRecord]:
    """Upper/lower oracle values at random (x, p) with |p| <= p_max.

    The refinement delta compares resolution ``res`` with ``res // 2``.
    """
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(samples):
        x = rng.random(spec.dim)
        d = rng.normal(size=spec.dim)
        p = d / np.linalg.norm(d) * p_max * rng.random() ** (1.0 / spec.dim)
        up, lo = minmax_both(spec, x, p, res)
        coarse, _ = minmax_both(spec, x, p, max(2, res // 2))
        out.append(IsaacsRecord(x, p, up, lo, abs(up - coarse),
                                float(spec.hamiltonian(x, p))))
    return out
