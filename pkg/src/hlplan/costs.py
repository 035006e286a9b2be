"""Per-trajectory cost terms and power-extended cost vectors.

Base terms, in vector order:

    traditional: lon_jerk, lat_jerk, lon_acc, lat_acc, c_v, c_safe
    heuristic:   s_tar_f, s_tar_b, e_tar_f, e_tar_b

Integrals use the trapezoidal rule on the trajectory's own time grid. The batch
kernels below work on stacks of equal-length trajectories; the single-trajectory
functions are thin wrappers around them.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .core import DrivingSituation, Lane, Trajectory

TRAD_TERMS = ("lon_jerk", "lat_jerk", "lon_acc", "lat_acc", "c_v", "c_safe")
HEU_TERMS = ("s_tar_f", "s_tar_b", "e_tar_f", "e_tar_b")
BASE_TERMS = TRAD_TERMS + HEU_TERMS
N_TRAD = len(TRAD_TERMS)
N_HEU = len(HEU_TERMS)
N_BASE = len(BASE_TERMS)


class Variant(str, enum.Enum):
    F0 = "f0"
    F1 = "f1"
    F2 = "f2"
    F3 = "f3"

    @property
    def uses_heuristic(self) -> bool:
        return self is Variant.F1

    @property
    def forest_ways(self) -> Optional[int]:
        return {Variant.F2: 2, Variant.F3: 3}.get(self)

    def length(self, K: int) -> int:
        if self is Variant.F0:
            return N_TRAD * K
        if self is Variant.F1:
            return (N_TRAD + N_HEU) * K
        return N_TRAD * K + 1


@dataclass(frozen=True)
class CostConfig:
    lambda_s: float = 0.1
    K: int = 5
    virtual_distance: float = 200.0
    virtual_speed: float = 20.0
    normalizers: Tuple[float, ...] = (1.0,) * N_BASE

    def __post_init__(self):
        if not self.lambda_s > 0:
            raise ValueError("lambda_s must be positive")
        if int(self.K) != self.K or self.K < 1:
            raise ValueError("K must be an integer >= 1")
        if not (self.virtual_distance > 0 and self.virtual_speed > 0):
            raise ValueError("virtual vehicle defaults must be positive")
        norms = tuple(float(v) for v in self.normalizers)
        if len(norms) != N_BASE or not all(v > 0 for v in norms):
            raise ValueError(f"need {N_BASE} positive normalizers")
        object.__setattr__(self, "normalizers", norms)

    def with_normalizers(self, normalizers: Sequence[float]) -> "CostConfig":
        return replace(self, normalizers=tuple(normalizers))

    def with_k(self, K: int) -> "CostConfig":
        return replace(self, K=K)


@dataclass(frozen=True)
class CostVector:
    variant: Variant
    K: int
    values: np.ndarray

    def __post_init__(self):
        if len(self.values) != self.variant.length(self.K):
            raise ValueError("cost vector length does not match variant and K")


@dataclass(frozen=True)
class WeightVector:
    variant: Variant
    K: int
    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.shape != (self.variant.length(self.K),):
            raise ValueError("weight vector length does not match variant and K")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def zeros(cls, variant: Variant, K: int) -> "WeightVector":
        return cls(variant, K, np.zeros(variant.length(K)))

    def expand_k(self, K: int) -> "WeightVector":
        """Same cost function expressed with ``K`` powers; new power weights are zero."""
        if K < self.K:
            raise ValueError("can only grow K")
        w = self.weights
        out = np.zeros(self.variant.length(K))
        nt = N_TRAD * self.K
        out[:nt] = w[:nt]
        if self.variant is Variant.F1:
            out[N_TRAD * K:N_TRAD * K + N_HEU * self.K] = w[nt:]
        elif self.variant.forest_ways:
            out[-1] = w[-1]
        return WeightVector(self.variant, K, out)


def _trapz_mean(values: np.ndarray, dt: float) -> np.ndarray:
    """Time average over the last axis by the trapezoidal rule."""
    n = values.shape[-1]
    tau = (n - 1) * dt
    integral = dt * (values.sum(axis=-1) - 0.5 * (values[..., 0] + values[..., -1]))
    return integral / tau


def predict_env(situation: DrivingSituation, tau: float, dt: float) -> Dict[str, np.ndarray]:
    """Constant-velocity prediction ``(s, d)`` per present slot on the grid 0, dt, ..."""
    n = int(np.floor(tau / dt + 1e-9)) + 1
    t = np.arange(n) * dt
    return {q: np.column_stack([st.s + st.vs * t, np.full(n, st.d)]) for q, st in situation.present()}


def _batch_comfort(points: np.ndarray, jerk: Optional[np.ndarray], dt: float) -> np.ndarray:
    if jerk is None:
        jerk = np.gradient(points[:, :, 4:6], dt, axis=1)
    jerk_mean = _trapz_mean(np.abs(np.moveaxis(jerk, 2, 1)), dt)  # (m, 2)
    acc_mean = _trapz_mean(np.abs(np.moveaxis(points[:, :, 4:6], 2, 1)), dt)
    return np.column_stack([jerk_mean[:, 0], jerk_mean[:, 1], acc_mean[:, 0], acc_mean[:, 1]])


def _batch_efficiency(points: np.ndarray, dt: float, ego_vs: float) -> np.ndarray:
    tau = (points.shape[1] - 1) * dt
    return ego_vs - (points[:, -1, 0] - points[:, 0, 0]) / tau


def _batch_safety(points: np.ndarray, dt: float, situation: DrivingSituation, lambda_s: float) -> np.ndarray:
    n = points.shape[1]
    total = np.zeros(points.shape[0])
    if not situation.env:
        return total
    t = np.arange(n) * dt
    for _, st in situation.present():
        gap_s = points[:, :, 0] - (st.s + st.vs * t)
        gap_d = points[:, :, 1] - st.d
        total = total + _trapz_mean(np.exp(-(lambda_s * gap_s**2 + gap_d**2)), dt)
    return total


def _lane_speeds(situation: DrivingSituation, lane: Lane) -> Tuple[Optional[float], Optional[float]]:
    """Absolute speeds of the (front, back) vehicles of a lane, None where absent."""
    front, back = lane.slots
    vf = situation.env[front].vs if front in situation.env else None
    vb = situation.env[back].vs if back in situation.env else None
    return vf, vb


def _batch_heuristic(points: np.ndarray, lanes: Sequence[Lane], situation: DrivingSituation,
                     cfg: CostConfig) -> np.ndarray:
    ego_vs = situation.ego.vs
    v_end = points[:, -1, 2]
    out = np.empty((points.shape[0], N_HEU))
    for i, lane in enumerate(lanes):
        vf, vb = _lane_speeds(situation, lane)
        if vf is None:
            rel_f0 = rel_fe = cfg.virtual_speed
        else:
            rel_f0, rel_fe = vf - ego_vs, vf - v_end[i]
        if vb is None:
            rel_b0 = rel_be = -cfg.virtual_speed
        else:
            rel_b0, rel_be = vb - ego_vs, vb - v_end[i]
        out[i] = (-rel_f0, rel_b0, -rel_fe, rel_be)
    return out


def _stack(trajs: Sequence[Trajectory]):
    points = np.stack([t.points for t in trajs])
    jerk = np.stack([t.jerk for t in trajs]) if all(t.jerk is not None for t in trajs) else None
    return points, jerk


def base_costs(trajs: Sequence[Trajectory], situation: DrivingSituation, cfg: CostConfig) -> np.ndarray:
    """Raw (unnormalized) base terms for each trajectory, shape ``(len(trajs), 10)``."""
    out = np.empty((len(trajs), N_BASE))
    groups: Dict[Tuple[int, float], List[int]] = {}
    for i, t in enumerate(trajs):
        if len(t) < 3:
            raise ValueError("trajectory needs at least 3 points for costing")
        groups.setdefault((len(t), t.dt, t.jerk is None), []).append(i)
    for (n, dt, _), idx in groups.items():
        members = [trajs[i] for i in idx]
        points, jerk = _stack(members)
        out[idx, 0:4] = _batch_comfort(points, jerk, dt)
        out[idx, 4] = _batch_efficiency(points, dt, situation.ego.vs)
        out[idx, 5] = _batch_safety(points, dt, situation, cfg.lambda_s)
        lanes = [t.target_lane if t.target_lane is not None else Lane.CURRENT for t in members]
        out[idx, 6:] = _batch_heuristic(points, lanes, situation, cfg)
    return out


def comfort_costs(traj: Trajectory) -> Tuple[float, float, float, float]:
    """(lon_jerk, lat_jerk, lon_acc, lat_acc) time-averaged absolute values."""
    if len(traj) < 3:
        raise ValueError("trajectory needs at least 3 points for comfort costs")
    points, jerk = _stack([traj])
    return tuple(float(v) for v in _batch_comfort(points, jerk, traj.dt)[0])


def efficiency_cost(traj: Trajectory, situation: DrivingSituation) -> float:
    if traj.duration <= 0:
        raise ValueError("trajectory duration must be positive")
    return float(_batch_efficiency(traj.points[None], traj.dt, situation.ego.vs)[0])


def safety_cost(traj: Trajectory, situation: DrivingSituation, cfg: CostConfig) -> float:
    return float(_batch_safety(traj.points[None], traj.dt, situation, cfg.lambda_s)[0])


def heuristic_incentive_costs(traj: Trajectory, situation: DrivingSituation,
                              cfg: CostConfig) -> Tuple[float, float, float, float]:
    """(c_s_tar_f, c_s_tar_b, c_e_tar_f, c_e_tar_b) for the trajectory's target lane."""
    if traj.target_lane is None:
        raise ValueError("trajectory has no target lane")
    return tuple(float(v) for v in _batch_heuristic(traj.points[None], [traj.target_lane], situation, cfg)[0])


def power_expand(base: np.ndarray, variant: Variant, K: int, normalizers: Sequence[float],
                 rf: Optional[np.ndarray] = None) -> np.ndarray:
    """Assemble cost vectors (rows) from raw base terms.

    Base terms are divided by their normalizers, then raised to powers 1..K and
    laid out power-major: trad^(1), ..., trad^(K), [heu^(1), ..., heu^(K)], [rf].
    """
    base = np.atleast_2d(np.asarray(base, dtype=float))
    norm = base / np.asarray(normalizers, dtype=float)
    trad = norm[:, :N_TRAD]
    blocks = [trad**k for k in range(1, K + 1)]
    if variant is Variant.F1:
        heu = norm[:, N_TRAD:]
        blocks += [heu**k for k in range(1, K + 1)]
    if variant.forest_ways:
        if rf is None:
            raise ValueError(f"variant {variant.value} needs a forest lane-incentive cost")
        blocks.append(np.asarray(rf, dtype=float).reshape(-1, 1))
    return np.concatenate(blocks, axis=1)


def assemble_cost_vector(traj: Trajectory, situation: DrivingSituation, cfg: CostConfig, variant: Variant,
                         rf_cost: Optional[float] = None) -> CostVector:
    if (rf_cost is not None) != bool(variant.forest_ways):
        raise ValueError("rf_cost must be given exactly for f2/f3")
    base = base_costs([traj], situation, cfg)
    rf = None if rf_cost is None else np.array([rf_cost])
    return CostVector(variant, cfg.K, power_expand(base, variant, cfg.K, cfg.normalizers, rf)[0])


def total_cost(cv: CostVector, w: WeightVector) -> float:
    if cv.variant is not w.variant or cv.K != w.K:
        raise ValueError("cost and weight vectors belong to different variants")
    return float(np.dot(cv.values, w.weights))


def compute_normalizers(base_rows: Sequence[np.ndarray], floor: float = 1e-8) -> Tuple[float, ...]:
    """Mean absolute value of each base term over all candidates of all samples."""
    stacked = np.concatenate([np.atleast_2d(b) for b in base_rows], axis=0)
    return tuple(float(max(v, floor)) for v in np.mean(np.abs(stacked), axis=0))
