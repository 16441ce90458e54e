"""Feedback realizations of the players' strategies.

Player I's highway strategy is a four-mode machine:

    WAIT_OUTBOUND  a = 0 on the height-0 highway until u0 >= sqrt(eps)
    CLIMB          a = (0, 1) for time eps/4
    WAIT_INBOUND   a = 0 on the height-eps/2 highway until x_1 <= 0
    DESCEND        a = (0, -1) for time eps/4

Mode switches are decided by the integrator (hitting times are bisected, the
timed modes end exactly); the kernels here only map (mode, state) to actions
and evaluate the hitting conditions. Player II's adversarial control pushes
whenever u0 <= 2 sqrt(eps) or the push moves the state away from x_1 = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from ._jit import jit
from .torus import bump_s, phi3_s, wrap_s


class Mode(IntEnum):
    WAIT_OUTBOUND = 0
    CLIMB = 1
    WAIT_INBOUND = 2
    DESCEND = 3


# integer codes shared with the integrator kernels
PI_HIGHWAY, PI_STAY, PI_HOME, PI_CONSTANT = 0, 1, 2, 3
PII_ADVERSARIAL, PII_ZERO, PII_PUSH, PII_RANDOM = 0, 1, 2, 3

_PI_CODES = {"highway": PI_HIGHWAY, "stay": PI_STAY, "home": PI_HOME,
             "constant": PI_CONSTANT}
_PII_CODES = {"adversarial": PII_ADVERSARIAL, "zero": PII_ZERO, "push": PII_PUSH,
              "random": PII_RANDOM}


class PhaseInvariantError(RuntimeError):
    """The state left the band a WAIT mode is supposed to keep it in."""


@dataclass(frozen=True)
class PolicyI:
    kind: str = "highway"
    # only read by kind == "constant" (test and calibration runs)
    action: tuple = (0.0, 0.0)

    def __post_init__(self):
        if self.kind not in _PI_CODES:
            raise ValueError(f"unknown Player I policy {self.kind!r}")

    @property
    def code(self) -> int:
        return _PI_CODES[self.kind]

    @classmethod
    def parse(cls, text: str) -> "PolicyI":
        return cls(text.strip())

    def __str__(self):
        return self.kind


@dataclass(frozen=True)
class PolicyII:
    kind: str = "adversarial"
    seed: int = 0

    def __post_init__(self):
        if self.kind not in _PII_CODES:
            raise ValueError(f"unknown Player II policy {self.kind!r}")

    @property
    def code(self) -> int:
        return _PII_CODES[self.kind]

    @classmethod
    def parse(cls, text: str) -> "PolicyII":
        text = text.strip()
        if text.startswith("random"):
            _, _, seed = text.partition(":")
            return cls("random", int(seed) if seed else 0)
        return cls(text)

    def __str__(self):
        return f"random:{self.seed}" if self.kind == "random" else self.kind


def baseline_families(seed: int = 0) -> tuple[list[PolicyI], list[PolicyII]]:
    """Player I: highway, stay-put, straight-home. Player II: adversarial,
    b = 0, b = (1, 0), seeded random bang-bang."""
    return ([PolicyI("highway"), PolicyI("stay"), PolicyI("home")],
            [PolicyII("adversarial"), PolicyII("zero"), PolicyII("push"),
             PolicyII("random", seed)])


def switch_schedule(seed: int, eps: float, T: float, dim: int = 2):
    """Random bang-bang schedule: exponential holding times of mean ``eps``.

    Returns ``(times, values)`` with ``times[0] == 0`` and a sentinel past
    ``T``; ``values[k]`` is the action held on [times[k], times[k+1]).
    Only the axes of B that are free get random 0/1 values.
    """
    rng = np.random.default_rng(seed)
    n = int(np.ceil(T / eps * 1.5)) + 16
    gaps = rng.exponential(eps, size=n)
    times = np.concatenate([[0.0], np.cumsum(gaps)])
    while times[-1] <= T:
        more = rng.exponential(eps, size=n)
        times = np.concatenate([times, times[-1] + np.cumsum(more)])
    k = int(np.searchsorted(times, T, side="right")) + 1
    times = times[:k]
    free = 1 if dim == 2 else 3
    values = np.zeros((k, dim))
    values[:, :free] = rng.integers(0, 2, size=(k, free)).astype(float)
    return times, values


# ---------------------------------------------------------- 2D kernels

@jit
def drift_correction_s(offset, eps, w, dt):
    """Vertical action pulling a WAIT state back onto its highway centre."""
    if abs(offset) <= w * eps / 2.0:
        return 0.0
    mag = min(1.0, abs(offset) / (2.0 * dt))
    return -mag if offset > 0.0 else mag


@jit
def highway_action_s(mode, x1, x2, eps, w, dt):
    if mode == 0:
        return 0.0, drift_correction_s(x2, eps, w, dt)
    if mode == 1:
        return 0.0, 1.0
    if mode == 2:
        return 0.0, drift_correction_s(x2 - eps / 2.0, eps, w, dt)
    return 0.0, -1.0


@jit
def highway_hit_s(mode, x1, x2, eps):
    """True once the hitting condition ending a WAIT mode holds."""
    if mode == 0:
        return min(abs(x1), 1.0) >= math.sqrt(eps)
    if mode == 2:
        return x1 <= 0.0
    return False


@jit
def home_action_s(x1, x2, dt):
    r = math.sqrt(x1 * x1 + x2 * x2)
    if r == 0.0:
        return 0.0, 0.0
    mag = min(1.0, r / (2.0 * dt))
    return -mag * x1 / r, -mag * x2 / r


@jit
def adversarial_action_s(x1, x2, eps, w):
    """b_1 of Player II's feedback control (b_2 is always 0)."""
    if min(abs(x1), 1.0) <= 2.0 * math.sqrt(eps):
        return 1.0
    y = x2 / eps
    if x1 * (bump_s(y, w) - bump_s(y + 0.5, w)) > 0.0:
        return 1.0
    return 0.0


def playerII_adversarial(state, eps: float, width: float) -> np.ndarray:
    """Action in B = [0, 1] x {0} for the 2D game at scale ``eps``."""
    return np.array([adversarial_action_s(float(state[0]), float(state[1]), eps, width), 0.0])


class HighwayController:
    """Stepwise Python face of the highway strategy (the integrator uses the
    same kernels directly)."""

    def __init__(self, eps: float, width: float, dt: float):
        if not (0.0 < eps <= 0.25):
            raise ValueError(f"eps must lie in (0, 1/4], got {eps}")
        self.eps, self.width, self.dt = eps, width, dt
        self.mode = Mode.WAIT_OUTBOUND
        self.entry_times = [0.0]

    def action(self, state) -> np.ndarray:
        self._check_band(state)
        return np.array(highway_action_s(int(self.mode), float(state[0]), float(state[1]),
                                         self.eps, self.width, self.dt))

    def update(self, t: float, state) -> bool:
        """Advance the mode machine at time ``t``; returns True on a switch."""
        m = int(self.mode)
        fire = False
        if m in (0, 2):
            fire = highway_hit_s(m, float(state[0]), float(state[1]), self.eps)
        elif t - self.entry_times[-1] >= self.eps / 4.0 * (1.0 - 1e-12):
            fire = True
        if fire:
            if t < self.entry_times[-1]:
                raise ValueError("mode switch times must be increasing")
            self.mode = Mode((m + 1) % 4)
            self.entry_times.append(t)
        return fire

    def _check_band(self, state):
        centre = {Mode.WAIT_OUTBOUND: 0.0, Mode.WAIT_INBOUND: self.eps / 2.0}.get(self.mode)
        if centre is not None and abs(state[1] - centre) > self.eps / 4.0:
            raise PhaseInvariantError(
                f"{self.mode.name}: x_2 = {state[1]:.3e} is off the highway at {centre:.3e}")


# ---------------------------------------------------------- 3D kernels

@jit
def corrector_target_s(x0, x1, x2, axis, shift):
    """Transverse displacement from the nearest point of l_axis (+ shift)."""
    if axis == 0:
        return wrap_s(x1 + shift), wrap_s(x2 + shift)
    if axis == 1:
        return wrap_s(x0 + shift), wrap_s(x2 - 0.25 + shift)
    return wrap_s(x0 - 0.25 + shift), wrap_s(x1 - 0.25 + shift)


@jit
def corrector_speed_s(gamma, rule):
    """Along-highway speed parameter: rule 0 minimizes the cost rate
    100|a| + 200 gamma a_i over the ball, rule 1 is min(2, |gamma|)."""
    g = abs(gamma)
    if rule == 1:
        return min(2.0, g)
    return 2.0 if g > 0.5 else 0.0


@jit
def corrector_action_s(phase, x0, x1, x2, axis, gamma, w, dt, rule, tol):
    """Returns (a0, a1, a2, phase) for the 3D corrector strategy.

    Phase 0 steers transversally onto l_axis + Z^3 (gamma < 0) or its
    half-shift (gamma >= 0); phase 1 holds -sgn(gamma) * speed * e_axis.
    """
    a0 = a1 = a2 = 0.0
    if phase == 0:
        shift = 0.5 if gamma >= 0.0 else 0.0
        du, dv = corrector_target_s(x0, x1, x2, axis, shift)
        r = math.sqrt(du * du + dv * dv)
        if r > tol:
            p0, p1, p2 = phi3_s(x0, x1, x2, w)
            q0, q1, q2 = phi3_s(x0 + 0.5, x1 + 0.5, x2 + 0.5, w)
            k = 2.0 * (1.0 + 99.0 * (p0 + p1 + p2 + q0 + q1 + q2))
            mag = min(2.0, r / (k * dt))
            if axis == 0:
                a1, a2 = -mag * du / r, -mag * dv / r
            elif axis == 1:
                a0, a2 = -mag * du / r, -mag * dv / r
            else:
                a0, a1 = -mag * du / r, -mag * dv / r
            return a0, a1, a2, 0
        phase = 1
    s = corrector_speed_s(gamma, rule)
    if gamma > 0.0:
        s = -s
    elif gamma == 0.0:
        s = 0.0
    if axis == 0:
        a0 = s
    elif axis == 1:
        a1 = s
    else:
        a2 = s
    return a0, a1, a2, phase


def corrector_axis(p) -> int:
    """0-based axis of the largest h(p_i) (largest |p_i| on ties)."""
    p = np.asarray(p, dtype=float)
    h = np.maximum(0.0, 400.0 * np.abs(p) - 200.0)
    order = np.lexsort((-np.abs(p), -h))
    return int(order[0])


def playerI_corrector_3d(p, state, phase: int = 1, width: float = 0.01, dt: float = 1e-3,
                         speed_rule: str = "optimal"):
    """Action of the corrector strategy for momentum ``p`` at ``state``.

    Returns ``(action, phase)``; ``phase`` 1 means the state is on the target
    highway and the constant along-line action is in force.
    """
    axis = corrector_axis(p)
    rule = 0 if speed_rule == "optimal" else 1
    a0, a1, a2, ph = corrector_action_s(phase, float(state[0]), float(state[1]), float(state[2]),
                                        axis, float(p[axis]), width, dt, rule, 1e-9 * width)
    return np.array([a0, a1, a2]), int(ph)
