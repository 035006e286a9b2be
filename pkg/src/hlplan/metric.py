"""Spatio-temporal distance between two trajectories sampled on a common grid."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DT, Trajectory


@dataclass(frozen=True)
class MetricConfig:
    lambda_d: float = 1.0
    dt: float = DT

    def __post_init__(self):
        if self.lambda_d < 0:
            raise ValueError("lambda_d must be non-negative")
        if not self.dt > 0:
            raise ValueError("dt must be positive")


def resample(traj: Trajectory, dt: float) -> Trajectory:
    """Linear interpolation of position and velocity onto the grid 0, dt, ...

    Accelerations are interpolated too so the result remains a full trajectory;
    the analytic jerk is dropped.
    """
    if abs(traj.dt - dt) < 1e-12:
        return traj
    n = int(np.floor(traj.duration / dt + 1e-9)) + 1
    t_new = np.arange(n) * dt
    t_old = traj.times
    cols = [np.interp(t_new, t_old, traj.points[:, c]) for c in range(6)]
    return Trajectory(dt, np.column_stack(cols), target_lane=traj.target_lane)


def distance_profile(p1: np.ndarray, p2: np.ndarray, lambda_d: float) -> np.ndarray:
    """Per-step ``|p1-p2| + lambda_d |v1-v2|`` for aligned ``(n, >=4)`` point arrays."""
    dpos = np.hypot(p1[..., 0] - p2[..., 0], p1[..., 1] - p2[..., 1])
    dvel = np.hypot(p1[..., 2] - p2[..., 2], p1[..., 3] - p2[..., 3])
    return dpos + lambda_d * dvel


def _mean_distance(p1: np.ndarray, p2: np.ndarray, n_min: int, lambda_d: float) -> np.ndarray:
    prof = distance_profile(p1[..., 1:n_min + 1, :], p2[..., 1:n_min + 1, :], lambda_d)
    return prof.sum(axis=-1) / n_min


def _check(t: Trajectory, cfg: MetricConfig):
    if abs(t.dt - cfg.dt) > 1e-12:
        raise ValueError(f"trajectory sampled at dt={t.dt}, metric expects {cfg.dt}; resample first")
    if len(t) < 2:
        raise ValueError("trajectory needs at least 2 points")


def trajectory_distance(t1: Trajectory, t2: Trajectory, cfg: MetricConfig = MetricConfig()) -> float:
    """Mean of position plus weighted velocity error over steps 1..n_min (t = 0 excluded)."""
    _check(t1, cfg)
    _check(t2, cfg)
    n_min = min(len(t1), len(t2)) - 1
    return float(_mean_distance(t1.points[None], t2.points[None], n_min, cfg.lambda_d)[0])


def distances_to(reference: Trajectory, candidates, cfg: MetricConfig = MetricConfig()) -> np.ndarray:
    """``trajectory_distance(c, reference)`` for every candidate, batched by length."""
    _check(reference, cfg)
    out = np.empty(len(candidates))
    groups = {}
    for i, c in enumerate(candidates):
        _check(c, cfg)
        groups.setdefault(len(c), []).append(i)
    for n, idx in groups.items():
        n_min = min(n, len(reference)) - 1
        stack = np.stack([candidates[i].points for i in idx])
        out[idx] = _mean_distance(stack, reference.points[None], n_min, cfg.lambda_d)
    return out
