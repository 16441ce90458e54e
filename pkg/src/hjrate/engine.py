"""Game integrator: midpoint steps of  sigma' = f(sigma / eps, a, b).

Actions are sampled at the start of each step and held over it. Hitting
times that end Player I's WAIT modes are bisected inside the step; the
timed CLIMB/DESCEND modes and the random opponent's switch times are hit
exactly by truncating the step. Running cost uses the midpoint rule at the
same midpoint state as the ODE step, so the diagnostics below (which read
the same midpoint) satisfy  running cost >= |E|  exactly.

Value estimates here are one-sided empirical brackets over finite policy
families, not the sup/inf of the game.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from ._jit import jit
from .games import GameSpec, make_game_2d, make_game_3d
from .policies import (PI_CONSTANT, PI_HIGHWAY, PI_HOME, PII_ADVERSARIAL, PII_PUSH,
                       PII_RANDOM, PolicyI, PolicyII, adversarial_action_s,
                       baseline_families, corrector_action_s, corrector_axis,
                       highway_action_s, highway_hit_s, home_action_s, switch_schedule)
from .torus import BumpProfile, bump_s, paper_profile, phi3_s


class PreconditionError(ValueError):
    """A resolution or parameter precondition does not hold."""


# stats slots returned by the 2D kernel
S_RUNNING, S_TERMINAL, S_E, S_UPLUS, S_UMINUS, S_SWITCHES = 0, 1, 2, 3, 4, 5
S_WAIT_COST, S_MAX_MOVE_COST, S_MOVES, S_MIN_X2, S_MAX_X2 = 6, 7, 8, 9, 10
S_MIN_X1, S_MAX_X1, S_MAX_SPEED, S_STEPS, S_X1, S_X2 = 11, 12, 13, 14, 15, 16
S_TRANSITIONS, S_MAX_WAIT_COST, S_ERROR, S_T = 17, 18, 19, 20
N_STATS = 21

REC_COLS = 11  # t, x1, x2, a1, a2, b1, b2, running, mid1, mid2, h


@jit
def _rk_2d(x1, x2, a1, a2, b1, h, eps, w):
    y = x2 / eps
    f1 = 2.0 * a1 + b1 * (bump_s(y, w) - bump_s(y + 0.5, w))
    f2 = 2.0 * a2
    m1 = x1 + 0.5 * h * f1
    m2 = x2 + 0.5 * h * f2
    ym = m2 / eps
    pa = bump_s(ym, w)
    pb = bump_s(ym + 0.5, w)
    y1 = x1 + h * (2.0 * a1 + b1 * (pa - pb))
    y2 = x2 + h * 2.0 * a2
    rc = h * (100.0 * (1.0 - pa - pb) + 100.0 * (a1 * a1 + a2 * a2))
    return y1, y2, m1, m2, pa, pb, rc


@jit
def _simulate_2d(eps, w, T, dt, pi_code, pi_a1, pi_a2, pii_code, sw_t, sw_v,
                 x1, x2, threshold, record, rec):
    st = np.zeros(N_STATS)
    sq = math.sqrt(eps)
    tiny = dt * 1e-9
    t = 0.0
    running = 0.0
    mode = 0
    phase_elapsed = 0.0
    phase_cost = 0.0
    last_label = -1
    nsw = sw_t.shape[0]
    sw = 0
    k = 0
    st[S_MIN_X1] = x1
    st[S_MAX_X1] = x1
    st[S_MIN_X2] = x2
    st[S_MAX_X2] = x2
    while T - t > tiny:
        if pi_code == PI_HIGHWAY:
            while True:
                if mode == 0 or mode == 2:
                    fire = highway_hit_s(mode, x1, x2, eps)
                else:
                    fire = eps / 4.0 - phase_elapsed <= tiny
                if not fire:
                    break
                if mode == 1 or mode == 3:
                    st[S_MAX_MOVE_COST] = max(st[S_MAX_MOVE_COST], phase_cost)
                    st[S_MOVES] += 1.0
                else:
                    st[S_WAIT_COST] += phase_cost
                    st[S_MAX_WAIT_COST] = max(st[S_MAX_WAIT_COST], phase_cost)
                mode = (mode + 1) % 4
                phase_elapsed = 0.0
                phase_cost = 0.0
                st[S_TRANSITIONS] += 1.0
            if mode == 0 and abs(x2) > eps / 4.0:
                st[S_ERROR] = 1.0
                break
            if mode == 2 and abs(x2 - eps / 2.0) > eps / 4.0:
                st[S_ERROR] = 1.0
                break

        h = min(dt, T - t)
        if pi_code == PI_HIGHWAY and (mode == 1 or mode == 3):
            h = min(h, eps / 4.0 - phase_elapsed)
        if pii_code == PII_RANDOM:
            while sw + 1 < nsw and sw_t[sw + 1] - t <= tiny:
                sw += 1
            if sw + 1 < nsw:
                h = min(h, sw_t[sw + 1] - t)

        if pi_code == PI_HIGHWAY:
            a1, a2 = highway_action_s(mode, x1, x2, eps, w, dt)
        elif pi_code == PI_HOME:
            a1, a2 = home_action_s(x1, x2, dt)
        elif pi_code == PI_CONSTANT:
            a1, a2 = pi_a1, pi_a2
        else:
            a1, a2 = 0.0, 0.0
        if pii_code == PII_ADVERSARIAL:
            b1 = adversarial_action_s(x1, x2, eps, w)
        elif pii_code == PII_PUSH:
            b1 = 1.0
        elif pii_code == PII_RANDOM:
            b1 = sw_v[sw, 0]
        else:
            b1 = 0.0

        y1, y2, m1, m2, pa, pb, rc = _rk_2d(x1, x2, a1, a2, b1, h, eps, w)
        if pi_code == PI_HIGHWAY and (mode == 0 or mode == 2) and highway_hit_s(mode, y1, y2, eps):
            lo = 0.0
            hi = 1.0
            while (hi - lo) * h > dt * 1e-3:
                mid = 0.5 * (lo + hi)
                z1, z2, _, _, _, _, _ = _rk_2d(x1, x2, a1, a2, b1, mid * h, eps, w)
                if highway_hit_s(mode, z1, z2, eps):
                    hi = mid
                else:
                    lo = mid
            h = hi * h
            y1, y2, m1, m2, pa, pb, rc = _rk_2d(x1, x2, a1, a2, b1, h, eps, w)

        running += rc
        phase_cost += rc
        phase_elapsed += h
        r0 = 100.0 * (1.0 - pa - pb)
        if r0 >= threshold:
            st[S_E] += h
        else:
            label = 1 if pa > 0.0 else 0
            if label == 1:
                st[S_UPLUS] += h
            else:
                st[S_UMINUS] += h
            if last_label >= 0 and label != last_label:
                st[S_SWITCHES] += 1.0
            last_label = label
        speed = math.sqrt((y1 - x1) ** 2 + (y2 - x2) ** 2) / h
        st[S_MAX_SPEED] = max(st[S_MAX_SPEED], speed)
        x1 = y1
        x2 = y2
        t += h
        st[S_MIN_X1] = min(st[S_MIN_X1], x1, m1)
        st[S_MAX_X1] = max(st[S_MAX_X1], x1, m1)
        st[S_MIN_X2] = min(st[S_MIN_X2], x2, m2)
        st[S_MAX_X2] = max(st[S_MAX_X2], x2, m2)
        if record:
            if k >= rec.shape[0]:
                st[S_ERROR] = 3.0
                break
            rec[k, 0] = t
            rec[k, 1] = x1
            rec[k, 2] = x2
            rec[k, 3] = a1
            rec[k, 4] = a2
            rec[k, 5] = b1
            rec[k, 6] = 0.0
            rec[k, 7] = running
            rec[k, 8] = m1
            rec[k, 9] = m2
            rec[k, 10] = h
        k += 1
        if not (math.isfinite(x1) and math.isfinite(x2)):
            st[S_ERROR] = 2.0
            break

    if pi_code == PI_HIGHWAY:
        if mode == 1 or mode == 3:
            st[S_MAX_MOVE_COST] = max(st[S_MAX_MOVE_COST], phase_cost)
            if eps / 4.0 - phase_elapsed <= tiny:
                st[S_MOVES] += 1.0
        else:
            st[S_WAIT_COST] += phase_cost
            st[S_MAX_WAIT_COST] = max(st[S_MAX_WAIT_COST], phase_cost)
    st[S_RUNNING] = running
    st[S_TERMINAL] = min(abs(x1), 1.0)
    st[S_STEPS] = k
    st[S_X1] = x1
    st[S_X2] = x2
    st[S_T] = t
    return st


@dataclass
class TrajectoryDiagnostics:
    measure_E: float
    measure_U_plus: float
    measure_U_minus: float
    switch_count: int

    @property
    def total_time(self) -> float:
        return self.measure_E + self.measure_U_plus + self.measure_U_minus


@dataclass
class Trajectory:
    """Accepted steps of one play. Row k describes the step ending at t[k]:
    the state there, the actions held during the step and the running cost
    accumulated so far."""

    eps: float
    dt: float
    T: float
    width: float
    policy_i: str
    policy_ii: str
    t: np.ndarray
    states: np.ndarray
    a: np.ndarray
    b: np.ndarray
    running: np.ndarray
    midpoints: np.ndarray
    steps: np.ndarray
    stats: np.ndarray = field(repr=False)
    x0: np.ndarray = field(default_factory=lambda: np.zeros(2))

    @property
    def running_cost(self) -> float:
        return float(self.stats[S_RUNNING])

    @property
    def terminal_cost(self) -> float:
        return float(self.stats[S_TERMINAL])

    @property
    def total_cost(self) -> float:
        return self.running_cost + self.terminal_cost

    @property
    def final_state(self) -> np.ndarray:
        return np.array([self.stats[S_X1], self.stats[S_X2]])

    @property
    def summary(self) -> TrajectoryDiagnostics:
        """Diagnostics accumulated inside the integrator (no recording needed)."""
        s = self.stats
        return TrajectoryDiagnostics(float(s[S_E]), float(s[S_UPLUS]), float(s[S_UMINUS]),
                                     int(s[S_SWITCHES]))

    @property
    def wait_cost(self) -> float:
        return float(self.stats[S_WAIT_COST])

    @property
    def max_wait_phase_cost(self) -> float:
        return float(self.stats[S_MAX_WAIT_COST])

    @property
    def max_move_phase_cost(self) -> float:
        return float(self.stats[S_MAX_MOVE_COST])

    @property
    def completed_moves(self) -> int:
        return int(self.stats[S_MOVES])

    @property
    def x2_range(self) -> tuple[float, float]:
        return float(self.stats[S_MIN_X2]), float(self.stats[S_MAX_X2])

    @property
    def x1_range(self) -> tuple[float, float]:
        return float(self.stats[S_MIN_X1]), float(self.stats[S_MAX_X1])

    @property
    def max_speed(self) -> float:
        return float(self.stats[S_MAX_SPEED])

    def to_csv(self, path) -> None:
        """Columns t, x1, x2, a1, a2, b1, b2, running_cost; one row per step."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "x1", "x2", "a1", "a2", "b1", "b2", "running_cost"])
            for k in range(len(self.t)):
                w.writerow([repr(float(v)) for v in
                            (self.t[k], *self.states[k], *self.a[k], *self.b[k], self.running[k])])


def default_dt(eps: float) -> float:
    return eps / 200.0


def _lower_policy_i(p: PolicyI):
    a = tuple(float(v) for v in p.action) + (0.0, 0.0)
    return p.code, a[0], a[1]


def integrate(spec: GameSpec, eps: float, policy_i: PolicyI, policy_ii: PolicyII,
              T: float = 1.0, dt: float | None = None, x0=(0.0, 0.0),
              record: bool = True, threshold: float = 1.0) -> Trajectory:
    """Play ``policy_i`` against ``policy_ii`` in the 2D game at scale ``eps``."""
    if spec.dim != 2:
        raise PreconditionError("integrate plays the 2D game; use corrector_game for 3D")
    if not eps > 0.0:
        raise PreconditionError(f"eps must be positive, got {eps}")
    dt = default_dt(eps) if dt is None else float(dt)
    w = spec.profile.width
    if not (0.0 < dt <= eps * w / 2.0 * (1.0 + 1e-12)):
        raise PreconditionError(
            f"dt = {dt:.3g} does not resolve the bump: need dt <= eps*w/2 = {eps * w / 2:.3g}")
    if policy_i.kind == "highway" and not eps <= 0.25:
        raise PreconditionError(f"the highway strategy needs eps <= 1/4, got {eps}")
    if policy_ii.kind == "random":
        sw_t, sw_v = switch_schedule(policy_ii.seed, eps, T, dim=2)
    else:
        sw_t, sw_v = np.zeros(1), np.zeros((1, 2))
    if record:
        cap = int(T / dt) + 8 * int(T / math.sqrt(eps) + 4) + len(sw_t) + 16
    else:
        cap = 1
    rec = np.zeros((cap, REC_COLS))
    code, ca1, ca2 = _lower_policy_i(policy_i)
    st = _simulate_2d(float(eps), float(w), float(T), dt, code, ca1, ca2, policy_ii.code,
                      sw_t, sw_v, float(x0[0]), float(x0[1]), float(threshold), record, rec)
    err = int(st[S_ERROR])
    if err == 1:
        raise RuntimeError("highway strategy left its WAIT band (phase invariant violated)")
    if err == 2:
        raise FloatingPointError("non-finite state during integration")
    if err == 3:
        raise RuntimeError("trajectory buffer overflow")
    n = int(st[S_STEPS]) if record else 0
    rec = rec[:n]
    return Trajectory(eps=eps, dt=dt, T=T, width=w, policy_i=str(policy_i),
                      policy_ii=str(policy_ii), t=rec[:, 0].copy(), states=rec[:, 1:3].copy(),
                      a=rec[:, 3:5].copy(), b=rec[:, 5:7].copy(), running=rec[:, 7].copy(),
                      midpoints=rec[:, 8:10].copy(), steps=rec[:, 10].copy(), stats=st,
                      x0=np.asarray(x0, dtype=float))


def diagnostics(traj: Trajectory, eps: float | None = None, threshold: float = 1.0,
                profile: BumpProfile | None = None) -> TrajectoryDiagnostics:
    """Measures of E, U+, U- and the U+/U- switch count from a recorded
    trajectory, classifying each step by its midpoint state."""
    eps = traj.eps if eps is None else eps
    width = profile.width if profile is not None else traj.width
    game = make_game_2d(BumpProfile(width))
    mids = traj.midpoints
    r0 = game.running_cost(mids / eps, np.zeros_like(mids), np.zeros_like(mids))
    in_e = r0 >= threshold
    from .torus import bump_eval
    plus = (~in_e) & (bump_eval(mids[:, 1] / eps, game.profile) > 0.0)
    minus = (~in_e) & ~plus
    labels = np.where(plus, 1, 0)[~in_e]
    switches = int(np.count_nonzero(np.diff(labels))) if len(labels) else 0
    h = traj.steps
    return TrajectoryDiagnostics(float(h[in_e].sum()), float(h[plus].sum()),
                                 float(h[minus].sum()), switches)


# ----------------------------------------------------------- value brackets

def family_costs(eps: float, policies_i, policies_ii, T: float = 1.0, dt: float | None = None,
                 profile: BumpProfile | None = None) -> dict:
    """Total cost of every (I, II) pairing, keyed by their names."""
    spec = make_game_2d(profile or paper_profile())
    out = {}
    for pi in policies_i:
        for pii in policies_ii:
            tr = integrate(spec, eps, pi, pii, T=T, dt=dt, record=False)
            out[(str(pi), str(pii))] = tr.total_cost
    return out


def upper_value_estimate(eps: float, ii_family=None, T: float = 1.0, dt: float | None = None,
                         profile: BumpProfile | None = None) -> float:
    """max over the Player II family of the cost paid by the highway strategy."""
    family = list(ii_family) if ii_family is not None else baseline_families()[1]
    if not family:
        raise ValueError("Player II family is empty")
    costs = family_costs(eps, [PolicyI("highway")], family, T, dt, profile)
    return max(costs.values())


def lower_value_estimate(eps: float, i_family=None, T: float = 1.0, dt: float | None = None,
                         profile: BumpProfile | None = None) -> float:
    """min over the Player I family of the cost forced by the adversarial control."""
    family = list(i_family) if i_family is not None else baseline_families()[0]
    if not family:
        raise ValueError("Player I family is empty")
    costs = family_costs(eps, family, [PolicyII("adversarial")], T, dt, profile)
    return min(costs.values())


# --------------------------------------------------------- 3D corrector

@jit
def _rk_3d(x0, x1, x2, a0, a1, a2, b0, b1, b2, h, w):
    p0, p1, p2 = phi3_s(x0, x1, x2, w)
    q0, q1, q2 = phi3_s(x0 + 0.5, x1 + 0.5, x2 + 0.5, w)
    k = 2.0 * (1.0 + 99.0 * (p0 + p1 + p2 + q0 + q1 + q2))
    m0 = x0 + 0.5 * h * (k * a0 + b0 * (p0 - q0))
    m1 = x1 + 0.5 * h * (k * a1 + b1 * (p1 - q1))
    m2 = x2 + 0.5 * h * (k * a2 + b2 * (p2 - q2))
    p0, p1, p2 = phi3_s(m0, m1, m2, w)
    q0, q1, q2 = phi3_s(m0 + 0.5, m1 + 0.5, m2 + 0.5, w)
    big = p0 + p1 + p2 + q0 + q1 + q2
    k = 2.0 * (1.0 + 99.0 * big)
    y0 = x0 + h * (k * a0 + b0 * (p0 - q0))
    y1 = x1 + h * (k * a1 + b1 * (p1 - q1))
    y2 = x2 + h * (k * a2 + b2 * (p2 - q2))
    rc = h * (100.0 * (1.0 - big) + 100.0 * math.sqrt(a0 * a0 + a1 * a1 + a2 * a2))
    return y0, y1, y2, rc


@jit
def _corrector_3d(p0, p1, p2, axis, gamma, rule, w, T, dt, pii_code, sw_t, sw_v,
                  x0, x1, x2, fit_from, tol):
    out = np.zeros(10)
    tiny = dt * 1e-9
    t = 0.0
    running = 0.0
    phase = 0
    sw = 0
    nsw = sw_t.shape[0]
    n = 0.0
    st = 0.0
    sv = 0.0
    stt = 0.0
    stv = 0.0
    svv = 0.0
    vmax = 0.0
    t_on = -1.0
    v_ref = 0.0
    while T - t > tiny:
        h = min(dt, T - t)
        if pii_code == PII_RANDOM:
            while sw + 1 < nsw and sw_t[sw + 1] - t <= tiny:
                sw += 1
            if sw + 1 < nsw:
                h = min(h, sw_t[sw + 1] - t)
        a0, a1, a2, phase = corrector_action_s(phase, x0, x1, x2, axis, gamma, w, dt, rule, tol)
        if phase == 1 and t_on < 0.0:
            t_on = t
        if pii_code == PII_PUSH:
            b0 = b1 = b2 = 1.0
        elif pii_code == PII_RANDOM:
            b0 = sw_v[sw, 0]
            b1 = sw_v[sw, 1]
            b2 = sw_v[sw, 2]
        else:
            b0 = b1 = b2 = 0.0
        y0, y1, y2, rc = _rk_3d(x0, x1, x2, a0, a1, a2, b0, b1, b2, h, w)
        sp = math.sqrt((y0 - x0) ** 2 + (y1 - x1) ** 2 + (y2 - x2) ** 2) / h
        vmax = max(vmax, sp)
        running += rc
        x0 = y0
        x1 = y1
        x2 = y2
        t += h
        if t >= fit_from:
            # centred moments: a constant v fits with slope exactly 0
            v = running + p0 * x0 + p1 * x1 + p2 * x2
            if n == 0.0:
                v_ref = v
            v -= v_ref
            tc = t - fit_from
            n += 1.0
            st += tc
            sv += v
            stt += tc * tc
            stv += tc * v
            svv += v * v
    den = n * stt - st * st
    slope = (n * stv - st * sv) / den
    icpt = (sv - slope * st) / n
    # residual sum of squares from the accumulated moments
    rss = svv - 2.0 * slope * stv - 2.0 * icpt * sv + slope * slope * stt \
        + 2.0 * slope * icpt * st + n * icpt * icpt
    out[0] = slope
    out[1] = icpt + v_ref - slope * fit_from
    out[2] = math.sqrt(max(rss, 0.0) / n)
    out[3] = running
    out[4] = running + p0 * x0 + p1 * x1 + p2 * x2
    out[5] = x0
    out[6] = x1
    out[7] = x2
    out[8] = t_on
    out[9] = vmax
    return out


@dataclass
class CorrectorResult:
    estimate: float
    residual: float
    per_policy: dict
    speed_rule: str

    def __float__(self):
        return self.estimate


def corrector_family_3d(seed: int = 0) -> list[PolicyII]:
    return [PolicyII("zero"), PolicyII("push"), PolicyII("random", seed)]


def corrector_game(spec: GameSpec, p, T: float = 100.0, dt: float = 1e-3, family=None,
                   speed_rule: str = "optimal", x0=(0.0, 0.0, 0.0),
                   switch_scale: float = 0.1) -> CorrectorResult:
    """Estimate H-bar(p) by playing the corrector strategy against the family.

    For each opponent, v(t) = running cost + p . sigma(t) is fitted by a line
    over t in [T/2, T]; the worst opponent (largest slope) gives the estimate
    -slope.
    """
    if spec.dim != 3:
        raise PreconditionError("corrector_game needs the 3D game")
    if T < 10.0:
        raise PreconditionError(f"corrector horizon must be >= 10, got {T}")
    p = np.asarray(p, dtype=float)
    family = list(family) if family is not None else corrector_family_3d()
    axis = corrector_axis(p)
    rule = {"optimal": 0, "literal": 1}[speed_rule]
    w = spec.profile.width
    per = {}
    worst = None
    for pii in family:
        if pii.kind == "adversarial":
            raise ValueError("the adversarial control is defined for the 2D game only")
        if pii.kind == "random":
            sw_t, sw_v = switch_schedule(pii.seed, switch_scale, T, dim=3)
        else:
            sw_t, sw_v = np.zeros(1), np.zeros((1, 3))
        out = _corrector_3d(p[0], p[1], p[2], axis, p[axis], rule, w, float(T), float(dt),
                            pii.code, sw_t, sw_v, float(x0[0]), float(x0[1]), float(x0[2]),
                            T / 2.0, 1e-9 * w)
        per[str(pii)] = {"slope": float(out[0]), "intercept": float(out[1]),
                         "residual": float(out[2]), "running": float(out[3]),
                         "value": float(out[4]), "final_state": out[5:8].copy(),
                         "time_on_highway": float(out[8]), "max_speed": float(out[9])}
        if worst is None or out[0] > per[worst]["slope"]:
            worst = str(pii)
    return CorrectorResult(-per[worst]["slope"], per[worst]["residual"], per, speed_rule)


def corrector_value_game(spec: GameSpec, p, T: float = 100.0, dt: float = 1e-3, **kw) -> float:
    return corrector_game(spec, p, T, dt, **kw).estimate
