"""Effective Hamiltonian of the 3D example: closed form, tabulation,
numerical extraction and audits.

The closed form is H-bar(p) = max_i h(p_i) with h(g) = max(0, 400|g| - 200).
Numerical estimates come from the corrector game (``method="game"``) or the
periodic corrector PDE (``method="pde"``).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np


def h_formula(gamma):
    return np.maximum(0.0, 400.0 * np.abs(np.asarray(gamma, dtype=float)) - 200.0)


def hbar_formula_3d(p):
    p = np.asarray(p, dtype=float)
    if p.shape[-1] != 3:
        raise ValueError(f"expected 3-vectors, got shape {p.shape}")
    return h_formula(p).max(axis=-1)


@dataclass
class EffectiveHTable:
    """H-bar sampled on the uniform grid [-box, box]^dim with ``n`` nodes per axis.

    The default 33 nodes on [-2, 2] (spacing 1/8) put the kinks of h at
    |p_i| = 1/2 on the grid, and every node is exact in binary, so formula
    tables pass the midpoint convexity check without round-off.
    """

    box: float
    n: int
    values: np.ndarray
    provenance: str = "formula"
    residuals: np.ndarray | None = None
    # set when H-bar(p) = max_i g(p_i) with g convex and minimal at 0
    axis_profile: object = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.n,) * self.values.ndim:
            raise ValueError(f"table shape {self.values.shape} is not ({self.n},)*dim")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("table values must be finite")
        if self.provenance not in ("formula", "game", "pde"):
            raise ValueError(f"unknown provenance {self.provenance!r}")
        if self.residuals is None:
            self.residuals = np.zeros_like(self.values)

    @property
    def dim(self) -> int:
        return self.values.ndim

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(-self.box, self.box, self.n)

    @property
    def spacing(self) -> float:
        return 2.0 * self.box / (self.n - 1)

    def points(self) -> np.ndarray:
        ax = self.nodes
        return np.stack(np.meshgrid(*([ax] * self.dim), indexing="ij"), axis=-1)

    @classmethod
    def tabulate(cls, fn, dim: int = 3, box: float = 2.0, n: int = 33,
                 provenance: str = "formula", residual_fn=None) -> "EffectiveHTable":
        """Tabulate ``fn``, which is called once on the stacked nodes
        (shape (n,)*dim + (dim,)); ``residual_fn`` likewise."""
        ax = np.linspace(-box, box, n)
        pts = np.stack(np.meshgrid(*([ax] * dim), indexing="ij"), axis=-1)
        vals = np.asarray(fn(pts), dtype=float)
        res = None if residual_fn is None else np.asarray(residual_fn(pts), dtype=float)
        return cls(box, n, vals, provenance, res)

    @classmethod
    def from_formula(cls, box: float = 2.0, n: int = 33) -> "EffectiveHTable":
        table = cls.tabulate(hbar_formula_3d, 3, box, n, "formula")
        table.axis_profile = h_formula
        return table

    def interpolate(self, p) -> np.ndarray:
        """Multilinear interpolant; raises if any p leaves the box."""
        p = np.asarray(p, dtype=float)
        if p.shape[-1] != self.dim:
            raise ValueError(f"expected {self.dim}-vectors, got shape {p.shape}")
        worst = float(np.abs(p).max()) if p.size else 0.0
        if worst > self.box * (1.0 + 1e-12):
            raise OverflowError(f"momentum {worst:.4g} outside the tabulated box {self.box}")
        s = (p + self.box) / self.spacing
        i0 = np.clip(np.floor(s).astype(int), 0, self.n - 2)
        frac = s - i0
        out = np.zeros(p.shape[:-1])
        for corner in range(1 << self.dim):
            wgt = np.ones(p.shape[:-1])
            idx = []
            for ax in range(self.dim):
                bit = (corner >> ax) & 1
                wgt = wgt * (frac[..., ax] if bit else 1.0 - frac[..., ax])
                idx.append(i0[..., ax] + bit)
            out = out + wgt * self.values[tuple(idx)]
        return out

    __call__ = interpolate

    def max_slope(self) -> float:
        """Largest axis difference quotient of the table."""
        return max(float(np.abs(np.diff(self.values, axis=ax)).max()) / self.spacing
                   for ax in range(self.dim))

    def legendre(self, q) -> np.ndarray:
        """Discrete transform L(q) = max over table nodes p of p.q - H-bar(p)."""
        q = np.atleast_2d(np.asarray(q, dtype=float))
        pts = self.points().reshape(-1, self.dim)
        vals = self.values.reshape(-1)
        out = np.empty(len(q))
        step = max(1, (1 << 22) // len(pts))
        for s in range(0, len(q), step):
            out[s:s + step] = (q[s:s + step] @ pts.T - vals[None, :]).max(axis=1)
        return out

    def to_csv(self, path) -> None:
        if self.dim != 3:
            raise ValueError("CSV export is defined for 3D tables")
        pts = self.points().reshape(-1, 3)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["p1", "p2", "p3", "hbar", "provenance", "residual"])
            for pt, v, r in zip(pts, self.values.reshape(-1), self.residuals.reshape(-1)):
                w.writerow([repr(float(pt[0])), repr(float(pt[1])), repr(float(pt[2])),
                            repr(float(v)), self.provenance, repr(float(r))])


@dataclass
class HbarEstimate:
    value: float
    residual: float
    method: str
    details: dict = field(default_factory=dict)

    def __float__(self):
        return self.value


def hbar_estimate(p, method: str = "game", T: float = 100.0, resolution: int | None = None,
                  profile=None, **kw) -> HbarEstimate:
    """H-bar(p) from the long-time corrector, by game simulation or PDE.

    ``resolution`` is dt for the game method and nodes per axis for the PDE.
    """
    from .games import make_game_3d
    from .torus import experiments_profile, paper_profile

    p = np.asarray(p, dtype=float)
    if method == "game":
        from .engine import corrector_game

        spec = make_game_3d(profile or paper_profile())
        res = corrector_game(spec, p, T=T, dt=resolution or 1e-3, **kw)
        return HbarEstimate(res.estimate, res.residual, "game", res.per_policy)
    if method == "pde":
        from .hjsolver import solve_corrector_periodic

        spec = make_game_3d(profile or experiments_profile(3))
        res = solve_corrector_periodic(spec, p, T, resolution or 40, **kw)
        return HbarEstimate(res.estimate, res.residual, "pde")
    if method == "formula":
        return HbarEstimate(float(hbar_formula_3d(p)), 0.0, "formula")
    raise ValueError(f"method must be game, pde or formula, got {method!r}")


def convexity_check(source, samples: int = 1000, seed: int = 0, box: float = 2.0) -> float:
    """Worst midpoint violation H((p+q)/2) - (H(p) + H(q))/2 over random pairs.

    For a table the pairs are nodes whose midpoint is also a node, so no
    interpolation enters. A callable is sampled uniformly from the 2^-20
    lattice in [-box, box]^3, so p, q and their midpoint are exact and a
    piecewise-linear H-bar with dyadic coefficients shows no round-off.
    """
    rng = np.random.default_rng(seed)
    if isinstance(source, EffectiveHTable):
        d, n = source.dim, source.n
        i = rng.integers(0, n, size=(samples, d))
        j = rng.integers(0, n, size=(samples, d))
        j = j - ((j - i) % 2)
        j = np.where(j < 0, j + 2, j)
        m = (i + j) // 2
        v = source.values
        gap = v[tuple(m.T)] - 0.5 * (v[tuple(i.T)] + v[tuple(j.T)])
        return float(gap.max())
    scale = 2.0 ** 20
    k = int(box * scale)
    p = rng.integers(-k, k + 1, size=(samples, 3)) / scale
    q = rng.integers(-k, k + 1, size=(samples, 3)) / scale
    f = lambda x: np.array([float(source(row)) for row in x])
    return float(np.max(f(0.5 * (p + q)) - 0.5 * (f(p) + f(q))))


def decomposition_check(p_samples, estimator=None) -> float:
    """max |H(p) - max_i H(p_i e_i)| over the samples (estimator defaults to
    the game method at T = 100)."""
    est = estimator or (lambda p: hbar_estimate(p, "game").value)
    worst = 0.0
    for p in np.atleast_2d(np.asarray(p_samples, dtype=float)):
        axis_vals = []
        for i in range(len(p)):
            e = np.zeros_like(p)
            e[i] = p[i]
            axis_vals.append(float(est(e)))
        worst = max(worst, abs(float(est(p)) - max(axis_vals)))
    return worst
