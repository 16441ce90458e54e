"""epsilon sweeps, log-log rate fits and report files."""

from __future__ import annotations

import csv
import logging
import math
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .engine import PreconditionError, lower_value_estimate, upper_value_estimate
from .policies import PolicyI, PolicyII
from .torus import profile_by_name

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

logger = logging.getLogger(__name__)

METHODS = ("game-upper", "game-lower", "pde")
DEFAULT_EPS = tuple(4.0 ** -k for k in range(5, 10))
TRIM_R2 = 0.98


@dataclass(frozen=True)
class RunConfig:
    method: str = "game-upper"
    profile: str = "paper"
    eps_list: tuple = DEFAULT_EPS
    # game time step is dt_factor * eps
    dt_factor: float = 1.0 / 200.0
    # PDE: nodes per eps-cell along x_2, half-width, x_1 spacing
    grid: int = 32
    L: float | None = None
    h_x1: float | None = 1.0 / 64.0
    T: float = 1.0
    policy_i: tuple = ("highway", "stay", "home")
    policy_ii: tuple = ("adversarial", "zero", "push", "random")
    seed: int = 0
    out: str | None = None
    plot: str | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        profile_by_name(self.profile, 2)
        eps = tuple(float(e) for e in self.eps_list)
        bad = [e for e in eps if not 0.0 < e <= 0.25]
        if bad:
            raise ValueError(f"eps values must lie in (0, 1/4]: {bad}")
        object.__setattr__(self, "eps_list", eps)
        for name in self.policy_i:
            PolicyI.parse(name)
        for name in self.policy_ii:
            PolicyII.parse(name)

    @classmethod
    def from_file(cls, path, **overrides) -> "RunConfig":
        """Flat TOML file; ``overrides`` (e.g. CLI flags) win over the file."""
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
        names = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ValueError(f"{path}: unknown keys {unknown}")
        data.update({k: v for k, v in overrides.items() if v is not None})
        for key in ("eps_list", "policy_i", "policy_ii"):
            if key in data:
                data[key] = tuple(data[key])
        return cls(**data)

    def families(self):
        pi = [PolicyI.parse(n) for n in self.policy_i]
        pii = []
        for n in self.policy_ii:
            p = PolicyII.parse(n)
            if p.kind == "random" and ":" not in n:
                p = PolicyII("random", self.seed)
            pii.append(p)
        return pi, pii


def loglog_fit(pairs) -> tuple[float, float, float]:
    """Least-squares line through (ln eps, ln value): (slope, intercept, R^2)."""
    pairs = list(pairs)
    if len(pairs) < 3:
        raise ValueError(f"need at least 3 points for a rate fit, got {len(pairs)}")
    for eps, v in pairs:
        if not v > 0.0:
            raise ValueError(f"value at eps = {eps!r} is {v!r}; log-log fit needs positive values")
    x = np.log([e for e, _ in pairs])
    y = np.log([v for _, v in pairs])
    slope, intercept = np.polyfit(x, y, 1)
    ss_res = float(np.sum((y - (slope * x + intercept)) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    # equal values: the mean can miss them by an ulp, which would make ss_tot noise
    r2 = 1.0 if np.ptp(y) == 0.0 else 1.0 - ss_res / ss_tot
    return float(slope), float(intercept), r2


@dataclass
class RateReport:
    method: str
    profile: str
    pairs: list = field(default_factory=list)
    slope: float = math.nan
    intercept: float = math.nan
    r2: float = math.nan
    excluded: list = field(default_factory=list)
    failures: list = field(default_factory=list)

    def __post_init__(self):
        self.pairs = sorted(self.pairs, key=lambda p: -p[0])

    @property
    def scaled(self) -> list[float]:
        return [v / math.sqrt(e) for e, v in self.pairs]

    @property
    def bracket(self) -> tuple[float, float]:
        s = self.scaled
        return (min(s), max(s)) if s else (math.nan, math.nan)

    def fit(self) -> "RateReport":
        """Fit all pairs; drop the largest eps once if R^2 < 0.98 and four
        or more points are available."""
        self.excluded = []
        pts = self.pairs
        self.slope, self.intercept, self.r2 = loglog_fit(pts)
        if self.r2 < TRIM_R2 and len(pts) >= 4:
            self.excluded = [pts[0][0]]
            self.slope, self.intercept, self.r2 = loglog_fit(pts[1:])
        return self


def _value(config: RunConfig, eps: float) -> float:
    profile = profile_by_name(config.profile, 2)
    pi, pii = config.families()
    dt = config.dt_factor * eps
    if config.method == "game-upper":
        return upper_value_estimate(eps, pii, config.T, dt, profile)
    if config.method == "game-lower":
        return lower_value_estimate(eps, pi, config.T, dt, profile)
    from .hjsolver import solve_micro

    return solve_micro(profile, eps, T=config.T, h=eps / config.grid, L=config.L,
                       h_x1=config.h_x1).value


def rate_sweep(config: RunConfig) -> RateReport:
    """Values at every eps of the config, then the rate fit.

    A failing eps is recorded and skipped; fewer than 3 surviving points is
    an error.
    """
    report = RateReport(config.method, config.profile)
    pairs = []
    for eps in config.eps_list:
        try:
            pairs.append((eps, float(_value(config, eps))))
            logger.info("%s eps=%g value=%r", config.method, eps, pairs[-1][1])
        except (PreconditionError, RuntimeError, FloatingPointError) as exc:
            logger.warning("%s eps=%g failed: %s", config.method, eps, exc)
            report.failures.append((eps, str(exc)))
    report.pairs = sorted(pairs, key=lambda p: -p[0])
    if len(report.pairs) < 3:
        raise RuntimeError(f"only {len(report.pairs)} eps values succeeded: {report.failures}")
    return report.fit()


CSV_HEADER = ["eps", "value", "value_over_sqrt_eps", "method", "profile"]


def emit_report(report: RateReport, csv_path, svg_path=None) -> None:
    """CSV of the pairs (17 significant digits) and, for a non-empty
    report, a log-log SVG with the fitted line and a slope-1/2 guide."""
    csv_path = Path(csv_path)
    try:
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_HEADER)
            for (e, v), s in zip(report.pairs, report.scaled):
                w.writerow([f"{e:.17g}", f"{v:.17g}", f"{s:.17g}", report.method, report.profile])
    except OSError as exc:
        raise OSError(f"cannot write report CSV {csv_path}: {exc}") from exc
    if svg_path is None or not report.pairs:
        return
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "hjrate"
    eps = np.array([e for e, _ in report.pairs])
    val = np.array([v for _, v in report.pairs])
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.loglog(eps, val, "o", label=report.method, gid="data")
    if math.isfinite(report.slope):
        ax.loglog(eps, np.exp(report.intercept) * eps ** report.slope, "-",
                  label=f"fit slope {report.slope:.3f}", gid="fit-line")
    anchor = val[-1] / math.sqrt(eps[-1])
    ax.loglog(eps, anchor * np.sqrt(eps), "--", color="grey", label="slope 1/2",
              gid="guide-line")
    ax.set_xlabel("eps")
    ax.set_ylabel("value")
    ax.legend()
    fig.tight_layout()
    try:
        fig.savefig(svg_path, format="svg", metadata={"Date": None})
    except OSError as exc:
        raise OSError(f"cannot write report plot {svg_path}: {exc}") from exc
    finally:
        plt.close(fig)


def parse_eps_list(text) -> tuple:
    if isinstance(text, (list, tuple)):
        return tuple(float(v) for v in text)
    return tuple(float(v) for v in str(text).split(",") if v.strip())

