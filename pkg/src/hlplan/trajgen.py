"""Candidate trajectory generation by polynomial boundary-value fitting.

Lateral motion is a quintic with zero terminal lateral velocity/acceleration;
longitudinal motion is a quartic (velocity keeping: the terminal position is
free, so the fifth-order coefficient is pinned to zero).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .core import D_LANE, V_MAX, DrivingSituation, Lane, Trajectory

_GRID_EPS = 1e-9


def _check_finite(*values):
    if not all(math.isfinite(v) for v in values):
        raise ValueError("non-finite boundary condition")


def fit_lateral(d0: float, dd0: float, ddd0: float, d_end: float, tau: float) -> np.ndarray:
    """Quintic coefficients a0..a5 with zero terminal velocity and acceleration."""
    _check_finite(d0, dd0, ddd0, d_end, tau)
    if tau <= 0:
        raise ValueError("tau must be positive")
    a0, a1, a2 = d0, dd0, 0.5 * ddd0
    # residuals of the terminal position, velocity, acceleration
    h = d_end - (a0 + a1 * tau + a2 * tau**2)
    v = -(a1 + 2 * a2 * tau)
    a = -2 * a2
    t2 = tau * tau
    a3 = (10 * h - 4 * v * tau + 0.5 * a * t2) / (t2 * tau)
    a4 = (-15 * h + 7 * v * tau - a * t2) / (t2 * t2)
    a5 = (6 * h - 3 * v * tau + 0.5 * a * t2) / (t2 * t2 * tau)
    return np.array([a0, a1, a2, a3, a4, a5])


def fit_longitudinal(s0: float, v0: float, a0: float, v_end: float, tau: float) -> np.ndarray:
    """Quartic coefficients b0..b5 (b5 = 0) reaching ``v_end`` with zero acceleration."""
    _check_finite(s0, v0, a0, v_end, tau)
    if tau <= 0:
        raise ValueError("tau must be positive")
    b0, b1, b2 = s0, v0, 0.5 * a0
    dv = v_end - v0 - a0 * tau
    da = -a0
    b3 = (3 * dv - da * tau) / (3 * tau * tau)
    b4 = (da * tau - 2 * dv) / (4 * tau**3)
    return np.array([b0, b1, b2, b3, b4, 0.0])


def poly_derivatives(coeffs: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Rows: value, first, second and third derivative of a degree-5 polynomial at ``t``."""
    c0, c1, c2, c3, c4, c5 = coeffs
    t = np.asarray(t, dtype=float)
    t2 = t * t
    t3 = t2 * t
    t4 = t3 * t
    return np.stack([
        c0 + c1 * t + c2 * t2 + c3 * t3 + c4 * t4 + c5 * t4 * t,
        c1 + 2 * c2 * t + 3 * c3 * t2 + 4 * c4 * t3 + 5 * c5 * t4,
        2 * c2 + 6 * c3 * t + 12 * c4 * t2 + 20 * c5 * t3,
        6 * c3 + 24 * c4 * t + 60 * c5 * t2,
    ])


@dataclass(frozen=True)
class PolynomialPair:
    lat_coeffs: Tuple[float, ...]
    lon_coeffs: Tuple[float, ...]
    tau: float

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if len(self.lat_coeffs) != 6 or len(self.lon_coeffs) != 6:
            raise ValueError("expected 6 coefficients per axis")
        if self.lon_coeffs[5] != 0.0:
            raise ValueError("longitudinal quintic coefficient must be 0")


@dataclass(frozen=True)
class TessellationConfig:
    d_lane: float = D_LANE
    delta_v: float = 4.0
    v_res: float = 1.0
    tau_min: float = 6.0
    tau_max: float = 10.0
    tau_res: float = 1.0
    v_max: float = V_MAX

    def __post_init__(self):
        if self.tau_min > self.tau_max:
            raise ValueError("tau_min must not exceed tau_max")
        if self.tau_min <= 0:
            raise ValueError("tau_min must be positive")
        if min(self.v_res, self.tau_res, self.d_lane) <= 0 or self.delta_v < 0:
            raise ValueError("resolutions and lane width must be positive")


class ModeKind(enum.Enum):
    TARGET_LANE_GIVEN = "target_lane_given"
    LANE_CHANGE_ONLY = "lane_change_only"
    THREE_WAY = "three_way"


@dataclass(frozen=True)
class PlanningMode:
    """TARGET_LANE_GIVEN(lane), LANE_CHANGE_ONLY or THREE_WAY."""

    kind: ModeKind
    lane: Optional[Lane] = None

    def __post_init__(self):
        if (self.kind is ModeKind.TARGET_LANE_GIVEN) != (self.lane is not None):
            raise ValueError("a lane is required exactly for TARGET_LANE_GIVEN")

    @classmethod
    def target(cls, lane: Lane) -> "PlanningMode":
        return cls(ModeKind.TARGET_LANE_GIVEN, lane)

    def lanes(self) -> Tuple[Lane, ...]:
        if self.kind is ModeKind.TARGET_LANE_GIVEN:
            return (self.lane,)
        if self.kind is ModeKind.LANE_CHANGE_ONLY:
            return (Lane.LEFT, Lane.RIGHT)
        return (Lane.LEFT, Lane.CURRENT, Lane.RIGHT)


LANE_CHANGE_ONLY = PlanningMode(ModeKind.LANE_CHANGE_ONLY)
THREE_WAY = PlanningMode(ModeKind.THREE_WAY)


class EmptyCandidateSet(ValueError):
    pass


def _grid(lo: float, hi: float, step: float) -> List[float]:
    n = int(math.floor((hi - lo) / step + _GRID_EPS))
    return [lo + k * step for k in range(n + 1)] if n >= 0 else []


def speed_grid(v0: float, cfg: TessellationConfig) -> List[float]:
    lo = max(v0 - cfg.delta_v, 0.0)
    hi = min(v0 + cfg.delta_v, cfg.v_max)
    return _grid(lo, hi, cfg.v_res)


def duration_grid(cfg: TessellationConfig) -> List[float]:
    return _grid(cfg.tau_min, cfg.tau_max, cfg.tau_res)


def tessellate(situation: DrivingSituation, cfg: TessellationConfig, mode: PlanningMode) -> List[Tuple[float, float, float]]:
    """Terminal targets ``(d_end, v_end, tau)`` sorted by d_end, then tau, then v_end."""
    lanes = [lane for lane in mode.lanes() if situation.lane_exists(lane)]
    ends = sorted(lane.offset_sign * cfg.d_lane for lane in lanes)
    speeds = speed_grid(situation.ego.vs, cfg)
    taus = duration_grid(cfg)
    targets = [(d, v, tau) for d in ends for tau in taus for v in speeds]
    if not targets:
        raise EmptyCandidateSet(f"no terminal targets for mode {mode.kind.value}"
                                + (f" ({mode.lane.value})" if mode.lane else "")
                                + f" on road {situation.road}")
    return targets


def discretize(poly: PolynomialPair, dt: float, target_lane: Optional[Lane] = None) -> Trajectory:
    if not dt > 0:
        raise ValueError("dt must be positive")
    if dt > poly.tau + _GRID_EPS:
        raise ValueError("dt exceeds trajectory duration")
    n = int(math.floor(poly.tau / dt + _GRID_EPS)) + 1
    t = np.arange(n) * dt
    lat = poly_derivatives(np.asarray(poly.lat_coeffs), t)
    lon = poly_derivatives(np.asarray(poly.lon_coeffs), t)
    points = np.column_stack([lon[0], lat[0], lon[1], lat[1], lon[2], lat[2]])
    jerk = np.column_stack([lon[3], lat[3]])
    return Trajectory(dt, points, target_lane=target_lane, jerk=jerk)


def _lane_of(d_end: float, d_lane: float) -> Lane:
    if d_end > 0.5 * d_lane:
        return Lane.LEFT
    if d_end < -0.5 * d_lane:
        return Lane.RIGHT
    return Lane.CURRENT


def build_candidate(situation: DrivingSituation, target: Tuple[float, float, float], dt: float,
                    d_lane: float = D_LANE) -> Trajectory:
    """Discretized trajectory from the ego state to a terminal target ``(d_end, v_end, tau)``."""
    ego = situation.ego
    d_end, v_end, tau = target
    lat = fit_lateral(ego.d, 0.0, 0.0, d_end, tau)
    lon = fit_longitudinal(ego.s, ego.vs, ego.as_, v_end, tau)
    return discretize(PolynomialPair(tuple(lat), tuple(lon), tau), dt, target_lane=_lane_of(d_end, d_lane))


def generate_candidates(situation: DrivingSituation, cfg: TessellationConfig, mode: PlanningMode,
                        dt: float) -> List[Trajectory]:
    """One discretized candidate per tessellated terminal target, in tessellation order.

    The initial lateral velocity and acceleration are taken as zero regardless of
    the recorded ego state.
    """
    return [build_candidate(situation, target, dt, cfg.d_lane) for target in tessellate(situation, cfg, mode)]
