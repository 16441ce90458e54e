"""Monotone Lax-Friedrichs solver for  u_t + H(x, Du) = 0.

One forward-Euler step reads

    u_new = u - dt * [ H(x, (D+u + D-u)/2) - sum_i theta_i (D+_i u - D-_i u)/2 ],

which is monotone when theta_i >= |dH/dp_i| and dt * sum_i theta_i / h_i <= 1;
we run at 40% of that bound. Periodic axes wrap, the others get a ghost
cell from linear extrapolation.

For the two game Hamiltonians there is also a monotone upwind scheme that
adds no artificial viscosity where the solution has a smooth minimum; the
game solvers use it by default because Lax-Friedrichs smears the narrow
highway valleys by O(theta * h * |D^2 u|). Both schemes have numba sweeps
(``_sweep_2d``, ``_sweep_3d``) and vectorized numpy fallbacks.
"""

from __future__ import annotations

import csv
import logging
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from . import _jit
from ._jit import jit
from .effective import EffectiveHTable, convexity_check
from .engine import PreconditionError
from .games import Game2D, Game3D, GameSpec, make_game_2d, u0 as game_u0
from .torus import BumpProfile, bump_eval, phi_vec_3d

logger = logging.getLogger(__name__)

CFL_FRACTION = 0.4
THETA_MIN = 1e-6


class MomentumBoxError(RuntimeError):
    """A discrete gradient left the momentum box the scheme was built for."""


@dataclass(frozen=True)
class Grid:
    lower: tuple
    spacing: tuple
    shape: tuple
    periodic: tuple

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def h(self) -> float:
        return max(self.spacing)

    @classmethod
    def box(cls, dim: int, L: float, N: int) -> "Grid":
        """[-L, L]^dim with spacing 2L/N (N + 1 nodes per axis)."""
        return cls((-L,) * dim, (2.0 * L / N,) * dim, (N + 1,) * dim, (False,) * dim)

    @classmethod
    def torus(cls, dim: int, N: int, period: float = 1.0) -> "Grid":
        return cls((0.0,) * dim, (period / N,) * dim, (N,) * dim, (True,) * dim)

    def axes(self) -> list[np.ndarray]:
        return [lo + h * np.arange(n) for lo, h, n in zip(self.lower, self.spacing, self.shape)]

    def points(self) -> np.ndarray:
        """Node coordinates, shape (*shape, dim)."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def interpolate(self, values: np.ndarray, x) -> np.ndarray:
        """Multilinear interpolation at points ``x`` (shape (..., dim))."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.zeros(x.shape[0])
        idx0, frac = [], []
        for ax in range(self.dim):
            s = (x[:, ax] - self.lower[ax]) / self.spacing[ax]
            n = self.shape[ax]
            if self.periodic[ax]:
                i = np.floor(s).astype(int)
                frac.append(s - i)
                idx0.append(i)
            else:
                if np.any(s < -1e-9) or np.any(s > n - 1 + 1e-9):
                    raise ValueError("interpolation point outside the grid")
                i = np.clip(np.floor(s).astype(int), 0, n - 2)
                frac.append(s - i)
                idx0.append(i)
        for corner in range(1 << self.dim):
            wgt = np.ones(x.shape[0])
            idx = []
            for ax in range(self.dim):
                bit = (corner >> ax) & 1
                wgt = wgt * (frac[ax] if bit else 1.0 - frac[ax])
                i = idx0[ax] + bit
                idx.append(i % self.shape[ax] if self.periodic[ax] else i)
            out += wgt * values[tuple(idx)]
        return out


@dataclass
class ScalarField:
    grid: Grid
    values: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        if self.values.shape != self.grid.shape:
            raise ValueError(f"field shape {self.values.shape} != grid shape {self.grid.shape}")
        if not np.all(np.isfinite(self.values)):
            raise FloatingPointError("non-finite values in field")

    def value_at(self, x) -> float:
        return float(self.grid.interpolate(self.values, np.asarray(x, dtype=float)[None, :])[0])

    def lipschitz(self) -> float:
        """max |u(i+1) - u(i)| / h over neighbour pairs (wrapping on periodic axes)."""
        out = 0.0
        for ax, (h, per) in enumerate(zip(self.grid.spacing, self.grid.periodic)):
            d = np.diff(self.values, axis=ax, append=np.take(self.values, [0], axis=ax)) if per \
                else np.diff(self.values, axis=ax)
            if d.size:
                out = max(out, float(np.abs(d).max()) / h)
        return out

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"i{k}" for k in range(self.grid.dim)] + ["value"])
            for idx in np.ndindex(*self.grid.shape):
                w.writerow([*idx, repr(float(self.values[idx]))])

    def to_binary(self, path) -> None:
        """Little-endian dump: b'HJF1', dim, per-axis (N, lower, spacing,
        periodic), time, then row-major float64 values."""
        g = self.grid
        with open(path, "wb") as fh:
            fh.write(b"HJF1")
            fh.write(struct.pack("<I", g.dim))
            for n, lo, h, per in zip(g.shape, g.lower, g.spacing, g.periodic):
                fh.write(struct.pack("<QddB", n, lo, h, int(per)))
            fh.write(struct.pack("<d", self.time))
            fh.write(np.ascontiguousarray(self.values, dtype="<f8").tobytes())

    @classmethod
    def from_binary(cls, path) -> "ScalarField":
        with open(path, "rb") as fh:
            if fh.read(4) != b"HJF1":
                raise ValueError(f"{path}: not a field dump")
            (dim,) = struct.unpack("<I", fh.read(4))
            shape, lower, spacing, periodic = [], [], [], []
            for _ in range(dim):
                n, lo, h, per = struct.unpack("<QddB", fh.read(25))
                shape.append(n)
                lower.append(lo)
                spacing.append(h)
                periodic.append(bool(per))
            (time,) = struct.unpack("<d", fh.read(8))
            vals = np.frombuffer(fh.read(), dtype="<f8").reshape(shape)
        return cls(Grid(tuple(lower), tuple(spacing), tuple(shape), tuple(periodic)),
                   vals.astype(float), time)


@dataclass(frozen=True)
class DissipationBounds:
    theta: tuple

    def cfl_dt(self, grid: Grid, fraction: float = CFL_FRACTION) -> float:
        return fraction / sum(t / h for t, h in zip(self.theta, grid.spacing))


# ------------------------------------------------------------ Hamiltonians

@dataclass(frozen=True)
class ScaledHamiltonian:
    """H(x / eps, p) for one of the example games; ``shift`` is added to p
    (the corrector problem evaluates H(x, p + Dw))."""

    game: GameSpec
    eps: float = 1.0
    shift: tuple | None = None

    def __call__(self, x, p):
        p = np.asarray(p, dtype=float)
        if self.shift is not None:
            p = p + np.asarray(self.shift)
        return self.game.hamiltonian(np.asarray(x, dtype=float) / self.eps, p)

    def coefficients(self, grid: Grid) -> dict:
        pts = grid.points() / self.eps
        prof = self.game.profile
        if isinstance(self.game, Game2D):
            pa = bump_eval(pts[..., 1], prof)
            pb = bump_eval(pts[..., 1] + 0.5, prof)
            return {"phi": pa + pb, "delta": pa - pb}
        va = phi_vec_3d(pts, prof)
        vb = phi_vec_3d(pts + 0.5, prof)
        return {"phi": va.sum(-1) + vb.sum(-1), "delta": va - vb}

    def evaluate(self, coef: dict, P: np.ndarray) -> np.ndarray:
        if self.shift is not None:
            P = P + np.asarray(self.shift)
        r = np.sqrt(np.sum(P * P, axis=-1))
        phi = coef["phi"]
        if isinstance(self.game, Game2D):
            ball = np.where(r <= 100.0, -r * r / 100.0, 100.0 - 2.0 * r)
            push = np.maximum(0.0, P[..., 0] * coef["delta"])
        else:
            ball = np.minimum(0.0, 200.0 - 4.0 * (1.0 + 99.0 * phi) * r)
            push = np.sum(np.maximum(0.0, P * coef["delta"]), axis=-1)
        return -100.0 * (1.0 - phi) - ball - push

    def upwind(self, coef: dict, dms, dps) -> np.ndarray:
        """Upwind numerical Hamiltonian from per-axis one-sided differences."""
        q = self.shift or (0.0,) * len(dms)
        dms = [d + s for d, s in zip(dms, q)]
        dps = [d + s for d, s in zip(dps, q)]
        r = np.sqrt(sum(np.maximum(np.maximum(m, 0.0), np.maximum(-p, 0.0)) ** 2
                        for m, p in zip(dms, dps)))
        phi = coef["phi"]

        def push(m, p, d):
            return np.maximum(0.0, np.where(d > 0.0, p, m) * d)

        if isinstance(self.game, Game2D):
            radial = np.where(r <= 100.0, r * r / 100.0, 2.0 * r - 100.0)
            pushes = push(dms[0], dps[0], coef["delta"])
        else:
            radial = np.maximum(0.0, 4.0 * (1.0 + 99.0 * phi) * r - 200.0)
            pushes = sum(push(dms[i], dps[i], coef["delta"][..., i]) for i in range(3))
        return -100.0 * (1.0 - phi) + radial - pushes

    def upwind_bounds(self, coef: dict) -> DissipationBounds:
        """Per-axis Lipschitz constants of the upwind numerical Hamiltonian."""
        if isinstance(self.game, Game2D):
            push = float(np.abs(coef["delta"]).max())
            return DissipationBounds((2.0 + push, 2.0))
        slope = 4.0 * (1.0 + 99.0 * float(coef["phi"].max()))
        push = np.abs(coef["delta"]).reshape(-1, 3).max(axis=0)
        return DissipationBounds(tuple(slope + float(v) for v in push))


def _bind(H, grid: Grid):
    """p-array -> H values on the grid nodes."""
    if isinstance(H, ScaledHamiltonian):
        coef = H.coefficients(grid)
        return lambda P: H.evaluate(coef, P)
    pts = grid.points()
    return lambda P: H(pts, P)


def estimate_dissipation(H, p_box, x_samples=64, seed: int = 0, n_p: int = 9) -> DissipationBounds:
    """theta_i = 1.1 * max sampled centred-difference |dH/dp_i| over p_box.

    ``x_samples`` is a count (uniform points in the unit cube) or an array
    of points, shape (n, dim).
    """
    box = np.asarray(p_box, dtype=float)
    dim = box.shape[0]
    if not np.all(np.isfinite(box)):
        raise ValueError("momentum box must be bounded")
    rng = np.random.default_rng(seed)
    if np.isscalar(x_samples):
        xs = rng.random((int(x_samples), dim))
    else:
        xs = np.asarray(x_samples, dtype=float).reshape(-1, dim)
    axes = [np.linspace(lo, hi, n_p) for lo, hi in box]
    grid_p = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dim)
    rand_p = box[:, 0] + (box[:, 1] - box[:, 0]) * rng.random((4 * n_p ** min(dim, 2), dim))
    ps = np.concatenate([grid_p, rand_p])
    delta = 1e-4 * max(1.0, float(np.max(box[:, 1] - box[:, 0])))
    theta = []
    X = xs[:, None, :]
    for i in range(dim):
        e = np.zeros(dim)
        e[i] = delta
        hp = H(X, ps[None, :, :] + e)
        hm = H(X, ps[None, :, :] - e)
        if not (np.all(np.isfinite(hp)) and np.all(np.isfinite(hm))):
            raise FloatingPointError("non-finite Hamiltonian sample")
        slope = float(np.max(np.abs(hp - hm))) / (2.0 * delta)
        theta.append(max(1.1 * slope, THETA_MIN))
    return DissipationBounds(tuple(theta))


# ------------------------------------------------------------- numpy step

def _differences(u: np.ndarray, grid: Grid):
    dps, dms = [], []
    for ax, (h, per) in enumerate(zip(grid.spacing, grid.periodic)):
        if per:
            up = np.roll(u, -1, axis=ax)
            um = np.roll(u, 1, axis=ax)
        else:
            u = np.moveaxis(u, ax, 0)
            up = np.empty_like(u)
            um = np.empty_like(u)
            up[:-1] = u[1:]
            up[-1] = 2.0 * u[-1] - u[-2]
            um[1:] = u[:-1]
            um[0] = 2.0 * u[0] - u[1]
            u = np.moveaxis(u, 0, ax)
            up = np.moveaxis(up, 0, ax)
            um = np.moveaxis(um, 0, ax)
        dps.append((up - u) / h)
        dms.append((u - um) / h)
    return dps, dms


def _check_cfl(theta: DissipationBounds, grid: Grid, dt: float):
    limit = theta.cfl_dt(grid, 1.0)
    if dt > CFL_FRACTION * limit * (1.0 + 1e-12):
        raise PreconditionError(
            f"CFL violated: dt = {dt:.3g} > {CFL_FRACTION} * {limit:.3g}")


def _numpy_step(u, grid, bound_H, theta, dt, p_limit=None):
    dps, dms = _differences(u, grid)
    P = np.stack([(a + b) * 0.5 for a, b in zip(dps, dms)], axis=-1)
    if p_limit is not None:
        worst = max(max(float(np.abs(a).max()), float(np.abs(b).max())) for a, b in zip(dps, dms))
        if worst > p_limit:
            raise MomentumBoxError(f"discrete gradient {worst:.3g} exceeds the box {p_limit:.3g}")
    diss = sum(t * (a - b) * 0.5 for t, a, b in zip(theta.theta, dps, dms))
    out = u - dt * (bound_H(P) - diss)
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("NaN/inf in Lax-Friedrichs update")
    return out


def lf_step(field: ScalarField, H, theta: DissipationBounds, dt: float) -> ScalarField:
    """One monotone Lax-Friedrichs step of u_t + H(x, Du) = 0."""
    _check_cfl(theta, field.grid, dt)
    out = _numpy_step(field.values, field.grid, _bind(H, field.grid), theta, dt)
    return ScalarField(field.grid, out, field.time + dt)


# ------------------------------------------------------------- numba sweeps
#
# ``upwind`` selects the numerical Hamiltonian: False is Lax-Friedrichs with
# constant theta; True splits H into its convex radial part, upwinded by
# |q|^2 = sum_i max(D-_i, 0)^2 + max(-D+_i, 0)^2 (largest of each pair),
# and its concave push terms, each read from D+ where the push is positive
# and from D- where it is negative. Both are monotone under the CFL bound.

@jit
def _radial_2d(r):
    if r <= 100.0:
        return r * r / 100.0
    return 2.0 * r - 100.0


@jit
def _radial_3d(r, f):
    g = 4.0 * (1.0 + 99.0 * f) * r - 200.0
    return g if g > 0.0 else 0.0


@jit
def _upwind_q(dm, dp):
    a = dm if dm > 0.0 else 0.0
    b = -dp if dp < 0.0 else 0.0
    return a if a > b else b


@jit
def _push(dm, dp, d):
    s = (dp if d > 0.0 else dm) * d
    return s if s > 0.0 else 0.0


@jit
def _sweep_2d(u, out, phi, delta, h0, h1, th0, th1, dt, per0, q0, q1, upwind):
    """One step for the 2D game Hamiltonian; axis 1 is always periodic.
    Returns the largest one-sided difference seen."""
    n0, n1 = u.shape
    worst = 0.0
    for i in range(n0):
        for j in range(n1):
            c = u[i, j]
            if i + 1 < n0:
                r = u[i + 1, j]
            elif per0:
                r = u[0, j]
            else:
                r = 2.0 * c - u[i - 1, j]
            if i > 0:
                l = u[i - 1, j]
            elif per0:
                l = u[n0 - 1, j]
            else:
                l = 2.0 * c - u[i + 1, j]
            dp0 = (r - c) / h0
            dm0 = (c - l) / h0
            dp1 = (u[i, (j + 1) % n1] - c) / h1
            dm1 = (c - u[i, (j - 1) % n1]) / h1
            worst = max(worst, abs(dp0), abs(dm0), abs(dp1), abs(dm1))
            base = -100.0 * (1.0 - phi[i, j])
            if upwind:
                a = _upwind_q(dm0 + q0, dp0 + q0)
                b = _upwind_q(dm1 + q1, dp1 + q1)
                H = base + _radial_2d(math.sqrt(a * a + b * b)) \
                    - _push(dm0 + q0, dp0 + q0, delta[i, j])
                out[i, j] = c - dt * H
            else:
                p0 = 0.5 * (dp0 + dm0) + q0
                p1 = 0.5 * (dp1 + dm1) + q1
                H = base + _radial_2d(math.sqrt(p0 * p0 + p1 * p1)) - max(0.0, p0 * delta[i, j])
                out[i, j] = c - dt * (H - 0.5 * th0 * (dp0 - dm0) - 0.5 * th1 * (dp1 - dm1))
    return worst


@jit
def _sweep_3d(u, out, phi, delta, h, th0, th1, th2, dt, q0, q1, q2, upwind):
    """One step for the 3D game Hamiltonian on a periodic cube grid."""
    n0, n1, n2 = u.shape
    worst = 0.0
    for i in range(n0):
        ip = (i + 1) % n0
        im = (i - 1) % n0
        for j in range(n1):
            jp = (j + 1) % n1
            jm = (j - 1) % n1
            for k in range(n2):
                kp = (k + 1) % n2
                km = (k - 1) % n2
                c = u[i, j, k]
                dp0 = (u[ip, j, k] - c) / h + q0
                dm0 = (c - u[im, j, k]) / h + q0
                dp1 = (u[i, jp, k] - c) / h + q1
                dm1 = (c - u[i, jm, k]) / h + q1
                dp2 = (u[i, j, kp] - c) / h + q2
                dm2 = (c - u[i, j, km]) / h + q2
                worst = max(worst, abs(dp0 - q0), abs(dm0 - q0), abs(dp1 - q1),
                            abs(dm1 - q1), abs(dp2 - q2), abs(dm2 - q2))
                f = phi[i, j, k]
                base = -100.0 * (1.0 - f)
                if upwind:
                    a = _upwind_q(dm0, dp0)
                    b = _upwind_q(dm1, dp1)
                    e = _upwind_q(dm2, dp2)
                    H = (base + _radial_3d(math.sqrt(a * a + b * b + e * e), f)
                         - _push(dm0, dp0, delta[i, j, k, 0]) - _push(dm1, dp1, delta[i, j, k, 1])
                         - _push(dm2, dp2, delta[i, j, k, 2]))
                    out[i, j, k] = c - dt * H
                else:
                    p0 = 0.5 * (dp0 + dm0)
                    p1 = 0.5 * (dp1 + dm1)
                    p2 = 0.5 * (dp2 + dm2)
                    H = (base + _radial_3d(math.sqrt(p0 * p0 + p1 * p1 + p2 * p2), f)
                         - max(0.0, p0 * delta[i, j, k, 0]) - max(0.0, p1 * delta[i, j, k, 1])
                         - max(0.0, p2 * delta[i, j, k, 2]))
                    out[i, j, k] = c - dt * (H - 0.5 * th0 * (dp0 - dm0)
                                             - 0.5 * th1 * (dp1 - dm1) - 0.5 * th2 * (dp2 - dm2))
    return worst


def _numpy_upwind_step(u, grid, H: "ScaledHamiltonian", coef, dt, p_limit=None):
    dps, dms = _differences(u, grid)
    if p_limit is not None:
        worst = max(max(float(np.abs(a).max()), float(np.abs(b).max())) for a, b in zip(dps, dms))
        if worst > p_limit:
            raise MomentumBoxError(f"discrete gradient {worst:.3g} exceeds the box {p_limit:.3g}")
    out = u - dt * H.upwind(coef, dms, dps)
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("NaN/inf in upwind update")
    return out


class _Evolver:
    """Double-buffered time stepping with the fastest available sweep.

    ``scheme`` is "lf" (any Hamiltonian) or "upwind" (game Hamiltonians
    only); ``theta`` must be the matching bounds.
    """

    def __init__(self, grid: Grid, H, theta: DissipationBounds, dt: float,
                 p_limit: float | None = None, scheme: str = "lf"):
        if scheme not in ("lf", "upwind"):
            raise ValueError(f"scheme must be 'lf' or 'upwind', got {scheme!r}")
        if scheme == "upwind" and not isinstance(H, ScaledHamiltonian):
            raise ValueError("the upwind scheme needs a game Hamiltonian")
        _check_cfl(theta, grid, dt)
        self.grid, self.H, self.theta, self.dt, self.p_limit = grid, H, theta, dt, p_limit
        self.scheme = scheme
        self.kernel = None
        upwind = scheme == "upwind"
        if isinstance(H, ScaledHamiltonian):
            self.coef = H.coefficients(grid)
        if _jit.USE_JIT and isinstance(H, ScaledHamiltonian):
            coef = self.coef
            q = tuple(float(v) for v in H.shift) if H.shift is not None else (0.0,) * grid.dim
            th = theta.theta
            if isinstance(H.game, Game2D) and grid.periodic[1]:
                phi = np.ascontiguousarray(np.broadcast_to(coef["phi"], grid.shape))
                delta = np.ascontiguousarray(np.broadcast_to(coef["delta"], grid.shape))
                h0, h1 = grid.spacing
                per0 = bool(grid.periodic[0])
                self.kernel = lambda u, o: _sweep_2d(u, o, phi, delta, h0, h1, th[0], th[1], dt,
                                                     per0, q[0], q[1], upwind)
            elif isinstance(H.game, Game3D) and all(grid.periodic) \
                    and len(set(grid.spacing)) == 1:
                phi = np.ascontiguousarray(coef["phi"])
                delta = np.ascontiguousarray(coef["delta"])
                h = grid.spacing[0]
                self.kernel = lambda u, o: _sweep_3d(u, o, phi, delta, h, th[0], th[1], th[2],
                                                     dt, q[0], q[1], q[2], upwind)
        if self.kernel is None and not upwind:
            self.bound = _bind(H, grid)

    def step(self, u: np.ndarray, out: np.ndarray) -> np.ndarray:
        if self.kernel is not None:
            worst = self.kernel(u, out)
            if self.p_limit is not None and worst > self.p_limit:
                raise MomentumBoxError(
                    f"discrete gradient {worst:.3g} exceeds the box {self.p_limit:.3g}")
            if not np.isfinite(out).all():
                raise FloatingPointError(f"NaN/inf in {self.scheme} update")
            return out
        if self.scheme == "upwind":
            return _numpy_upwind_step(u, self.grid, self.H, self.coef, self.dt, self.p_limit)
        return _numpy_step(u, self.grid, self.bound, self.theta, self.dt, self.p_limit)

    def run(self, u: np.ndarray, n_steps: int, observe=None) -> np.ndarray:
        u = np.array(u, dtype=float)
        spare = np.empty_like(u)
        for n in range(n_steps):
            new = self.step(u, spare)
            spare, u = u, new
            if observe is not None:
                observe(n + 1, u)
        return u



def _steps(T: float, dt: float) -> tuple[int, float]:
    n = max(1, int(math.ceil(T / dt - 1e-9)))
    return n, T / n


# ------------------------------------------------------------ micro problem

SPEED_BOUND_2D = 3.0


def momentum_bound(H, x_points, lip0: float, radii=None) -> float:
    """Radius beyond which H(x, p) exceeds every |H(x, Du0)|, |Du0| <= lip0.

    Viscosity solutions keep |u_t| <= M := sup |H(x, Du0)|, so their
    gradients stay where H <= M.
    """
    x_points = np.asarray(x_points, dtype=float)
    dim = x_points.shape[-1]
    ang = np.linspace(0.0, 2.0 * np.pi, 65)[:-1]
    if dim == 2:
        dirs = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    else:
        from .games import _sphere_directions
        dirs = _sphere_directions(dim, 128)
    X = x_points[:, None, :]
    grads = np.concatenate([np.zeros((1, dim)), lip0 * dirs])
    M = float(np.abs(H(X, grads[None, :, :])).max())
    radii = np.arange(1.0, 2001.0) if radii is None else np.asarray(radii)
    for r in radii:
        if float(H(X, r * dirs[None, :, :]).min()) > M:
            return float(r)
    raise RuntimeError("Hamiltonian not coercive on the probed radii")


def micro_grid(eps: float, L: float, h: float, h_x1: float | None = None) -> Grid:
    """[-L, L] x [0, eps) with the x_2 axis periodic.

    u0 does not depend on x_2 and H(x/eps, p) is eps-periodic in x_2, so the
    solution is eps-periodic in x_2 and one period is the whole domain.
    H does not depend on x_1, so that axis may use a coarser ``h_x1``.
    """
    h_x1 = h if h_x1 is None else h_x1
    n0 = int(round(2.0 * L / h_x1))
    n1 = max(4, int(math.ceil(eps / h - 1e-9)))
    return Grid((-L, 0.0), (2.0 * L / n0, eps / n1), (n0 + 1, n1), (False, True))


@dataclass
class MicroSolution:
    field: ScalarField
    value: float
    eps: float
    h: float
    theta: DissipationBounds
    dt: float
    steps: int
    scheme: str


def solve_micro(profile: BumpProfile, eps: float, T: float = 1.0, h: float | None = None,
                L: float | None = None, grid: Grid | None = None, h_x1: float | None = None,
                scheme: str = "upwind") -> MicroSolution:
    """u^eps(T, .) for the 2D game with u0 = min(|x_1|, 1); value at x = 0.

    ``h`` is the x_2 spacing (it must resolve the bump, h <= eps*w/4).
    """
    w = profile.width
    if grid is None:
        h = eps * w / 4.0 if h is None else h
        L = 2.0 + SPEED_BOUND_2D * T if L is None else L
        grid = micro_grid(eps, L, h, h_x1)
    h = grid.spacing[1]
    if h > eps * w / 4.0 * (1.0 + 1e-9):
        need = int(math.ceil(4.0 / w))
        need_n = int(math.ceil(-2.0 * grid.lower[0] / (eps * w / 4.0)))
        raise PreconditionError(
            f"grid spacing {h:.3g} does not resolve the bump: need h <= eps*w/4 = "
            f"{eps * w / 4:.3g}, i.e. N >= {need_n} points on [-L, L] "
            f"({need} per eps-cell)")
    L_have = -grid.lower[0]
    if L_have < 1.0 + SPEED_BOUND_2D * T - 1e-12:
        raise PreconditionError(
            f"half-width {L_have} < 1 + V*T = {1 + SPEED_BOUND_2D * T}; the origin would "
            "see the boundary")
    game = make_game_2d(profile)
    H = ScaledHamiltonian(game, eps)
    xs = np.stack([np.zeros(grid.shape[1]), grid.axes()[1]], axis=-1)
    P = momentum_bound(H, xs, 1.0)
    if scheme == "upwind":
        theta = H.upwind_bounds(H.coefficients(grid))
    else:
        theta = estimate_dissipation(H, [(-P - 1.0, P + 1.0)] * 2, x_samples=xs, n_p=41)
    n, dt = _steps(T, theta.cfl_dt(grid))
    ev = _Evolver(grid, H, theta, dt, p_limit=P + 1.0, scheme=scheme)
    u = ev.run(game_u0(grid.points()), n)
    field = ScalarField(grid, u, T)
    value = field.value_at(np.zeros(2))
    logger.info("solve_micro eps=%g h=%g steps=%d value=%g", eps, h, n, value)
    return MicroSolution(field, value, eps, h, theta, dt, n, scheme)


# ------------------------------------------------------- corrector problem

@dataclass
class CorrectorPDEResult:
    estimate: float
    residual: float
    field: ScalarField
    times: np.ndarray
    means: np.ndarray


def solve_corrector_periodic(H, p, T: float, N: int, dim: int | None = None,
                             width: float | None = None, fit_from: float = 0.5,
                             p_bound: float | None = None,
                             scheme: str | None = None) -> CorrectorPDEResult:
    """H-bar(p) from  w_t + H(x, p + Dw) = 0, w(0) = 0  on the unit torus.

    ``H`` is a ``GameSpec`` (its closed-form Hamiltonian) or any callable
    H(x, p). The estimate is the slope of -mean(w(t)) fitted over
    t in [fit_from * T, T]. Game Hamiltonians default to the upwind scheme,
    callables always use Lax-Friedrichs.
    """
    p = np.asarray(p, dtype=float)
    dim = len(p) if dim is None else dim
    if isinstance(H, GameSpec):
        width = H.profile.width
        Hs = ScaledHamiltonian(H, 1.0, tuple(p))
    else:
        Hs = lambda x, q, _H=H: _H(x, q + p)
    grid = Grid.torus(dim, N)
    if width is not None and grid.h > width / 4.0 * (1.0 + 1e-9):
        raise PreconditionError(
            f"torus spacing 1/{N} does not resolve the bump: need N >= {int(math.ceil(4 / width))}")
    pts = grid.points().reshape(-1, dim)
    if len(pts) > 4096:
        rng = np.random.default_rng(0)
        pts = np.concatenate([pts[rng.choice(len(pts), 3000, replace=False)],
                              _line_nodes(grid) if dim == 3 else pts[:0]])
    scheme = scheme or ("upwind" if isinstance(H, GameSpec) else "lf")
    if scheme == "upwind":
        theta = Hs.upwind_bounds(Hs.coefficients(grid))
    else:
        if p_bound is None:
            p_bound = momentum_bound(Hs, pts, 0.0) if isinstance(H, GameSpec) else 1.0
        theta = estimate_dissipation(Hs, [(-p_bound - 1.0, p_bound + 1.0)] * dim,
                                     x_samples=pts, n_p=9 if dim == 3 else 21)
    n, dt = _steps(T, theta.cfl_dt(grid))
    ev = _Evolver(grid, Hs, theta, dt, scheme=scheme)
    start = int(math.floor(fit_from * n))
    times, means = [], []

    def observe(k, u):
        if k >= start:
            times.append(k * dt)
            means.append(-float(u.mean()))

    u = ev.run(np.zeros(grid.shape), n, observe)
    times = np.asarray(times)
    means = np.asarray(means)
    A = np.stack([times, np.ones_like(times)], axis=-1)
    coef, *_ = np.linalg.lstsq(A, means, rcond=None)
    resid = float(np.sqrt(np.mean((A @ coef - means) ** 2)))
    return CorrectorPDEResult(float(coef[0]), resid, ScalarField(grid, u, T), times, means)


def _line_nodes(grid: Grid) -> np.ndarray:
    """Grid nodes on the highway lines and their half-shifts (3D torus)."""
    t = grid.axes()[0]
    pts = []
    for s in (0.0, 0.5):
        pts.append(np.stack([t, np.full_like(t, s), np.full_like(t, s)], -1))
        pts.append(np.stack([np.full_like(t, s), t, np.full_like(t, 0.25 + s)], -1))
        pts.append(np.stack([np.full_like(t, 0.25 + s), np.full_like(t, 0.25 + s), t], -1))
    return np.concatenate(pts) % 1.0


# ------------------------------------------------------- effective problem

def _godunov_convex_1d(g, dm, dp):
    """Godunov flux of an even convex g: min over [dm, dp] when dm <= dp,
    max of the endpoints otherwise."""
    lo = g(np.clip(0.0, dm, dp))
    hi = np.maximum(g(dm), g(dp))
    return np.where(dm <= dp, lo, hi)


def solve_effective(hbar, u0, T: float, grid: Grid) -> ScalarField:
    """Evolve u_t + Hbar(Du) = 0 from ``u0``.

    ``hbar`` is an ``EffectiveHTable`` (multilinear interpolant; the run
    aborts if a discrete gradient leaves its box) or a callable of p. Tables
    of the form max_i g(p_i) are stepped with the exact Godunov flux
    max_i G(D-_i, D+_i), everything else with Lax-Friedrichs.
    """
    if isinstance(hbar, EffectiveHTable):
        box = hbar.box
        fn = hbar.interpolate
        p_limit = box
        n_p = hbar.n
    else:
        fn = hbar
        box = 3.0
        p_limit = None
        n_p = 21
    H = lambda x, p: fn(p)
    theta = estimate_dissipation(H, [(-0.99 * box, 0.99 * box)] * grid.dim, x_samples=1, n_p=n_p)
    n, dt = _steps(T, theta.cfl_dt(grid))
    u = np.asarray(u0(grid.points()), dtype=float)
    g = getattr(hbar, "axis_profile", None)
    if g is None:
        ev = _Evolver(grid, H, theta, dt, p_limit=p_limit)
        return ScalarField(grid, ev.run(u, n), T)
    for _ in range(n):
        dps, dms = _differences(u, grid)
        worst = max(max(float(np.abs(a).max()), float(np.abs(b).max())) for a, b in zip(dps, dms))
        if worst > p_limit:
            raise MomentumBoxError(f"discrete gradient {worst:.3g} exceeds the box {p_limit:.3g}")
        flux = np.max([_godunov_convex_1d(g, m, p) for m, p in zip(dms, dps)], axis=0)
        u = u - dt * flux
    if not np.all(np.isfinite(u)):
        raise FloatingPointError("NaN/inf in effective-problem update")
    return ScalarField(grid, u, T)


def hopf_lax_oracle(table: EffectiveHTable, u0, t: float, x, n_vel: int = 21,
                    v_max: float | None = None, v_fine: float = 1.0) -> np.ndarray:
    """min over velocities q of u0(x - t q) + t L(q), with L the discrete
    Legendre transform of the tabulated convex Hamiltonian.

    Each velocity axis merges ``n_vel`` points on [-v_max, v_max] with
    ``n_vel`` points on [-v_fine, v_fine]; v_max defaults to the table's
    largest slope.
    """
    worst = convexity_check(table, samples=2000, seed=0)
    if worst > 1e-9 * max(1.0, float(np.abs(table.values).max())):
        raise ValueError(f"Hopf-Lax needs a convex Hamiltonian (midpoint violation {worst:.3g})")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if t == 0.0:
        return u0(x)
    d = table.dim
    if v_max is None:
        v_max = table.max_slope()
    q1 = np.unique(np.concatenate([np.linspace(-v_max, v_max, n_vel),
                                   np.linspace(-v_fine, v_fine, n_vel)]))
    Q = np.stack(np.meshgrid(*([q1] * d), indexing="ij"), axis=-1).reshape(-1, d)
    L = table.legendre(Q)
    out = np.empty(len(x))
    for k, xk in enumerate(x):
        out[k] = float(np.min(u0(xk[None, :] - t * Q) + t * L))
    return out
