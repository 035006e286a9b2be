"""Planning with decision: cost every candidate, pick the cheapest, read off the maneuver."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .core import D_LANE, LANE_TOL, Behavior, DrivingSituation, Lane, Trajectory, validate_situation
from .costs import CostConfig, Variant, WeightVector, base_costs, power_expand
from .forest import ForestModel, lane_costs
from .learner import LANE_INDEX, selection_probabilities
from .metric import MetricConfig
from .trajgen import PlanningMode, TessellationConfig, build_candidate, tessellate


@dataclass(frozen=True)
class PlannerModel:
    """A trained cost function together with the configuration it was trained under.

    ``cost_cfg.normalizers`` are the normalizers frozen at training time.
    """

    variant: Variant
    weights: WeightVector
    cost_cfg: CostConfig
    tess_cfg: TessellationConfig = TessellationConfig()
    metric_cfg: MetricConfig = MetricConfig()
    forest: Optional[ForestModel] = None

    def __post_init__(self):
        if self.weights.variant is not self.variant or self.weights.K != self.cost_cfg.K:
            raise ValueError("weights do not match the model's variant and K")
        if bool(self.variant.forest_ways) != (self.forest is not None):
            raise ValueError("a forest is required exactly for f2/f3")
        if self.forest is not None:
            expected = "TWO_WAY" if self.variant.forest_ways == 2 else "THREE_WAY"
            if self.forest.decision_pool != expected:
                raise ValueError(f"variant {self.variant.value} needs a {expected} forest")

    @property
    def K(self) -> int:
        return self.cost_cfg.K


@dataclass
class PlanResult:
    trajectory: Trajectory
    decision: Behavior
    index: int
    targets: List[Tuple[float, float, float]]
    costs: np.ndarray
    probabilities: np.ndarray


def deduce_decision(traj: Trajectory, d_lane: float = D_LANE, tol: float = LANE_TOL) -> Behavior:
    """Maneuver implied by the terminal lateral offset (positive d is left)."""
    d_end = float(traj.d[-1])
    for behavior, center in ((Behavior.LLC, d_lane), (Behavior.CF, 0.0), (Behavior.RLC, -d_lane)):
        if abs(d_end - center) <= tol:
            return behavior
    raise ValueError(f"no lane center within tolerance (terminal d = {d_end:.3f})")


def candidate_costs(situation: DrivingSituation, model: PlannerModel, mode: PlanningMode):
    """Targets, trajectories and total costs of every candidate, in generation order."""
    dt = model.metric_cfg.dt
    targets = tessellate(situation, model.tess_cfg, mode)
    trajs = [build_candidate(situation, t, dt, model.tess_cfg.d_lane) for t in targets]
    base = base_costs(trajs, situation, model.cost_cfg)
    rf = None
    if model.forest is not None:
        per_lane = lane_costs(model.forest, situation, model.cost_cfg)
        table = np.array([per_lane[Lane.LEFT], per_lane[Lane.CURRENT], per_lane[Lane.RIGHT]])
        rf = table[[LANE_INDEX[t.target_lane] for t in trajs]]
    C = power_expand(base, model.variant, model.K, model.cost_cfg.normalizers, rf)
    return targets, trajs, C @ model.weights.weights


def plan(situation: DrivingSituation, model: PlannerModel, mode: PlanningMode) -> PlanResult:
    """Select the minimum-cost candidate; ties go to the lowest generation index."""
    problems = validate_situation(situation)
    if problems:
        raise ValueError("invalid situation: " + "; ".join(problems))
    targets, trajs, costs = candidate_costs(situation, model, mode)
    if not np.all(np.isfinite(costs)):
        raise ArithmeticError("non-finite candidate cost")
    j = int(np.argmin(costs))  # first occurrence on ties
    chosen = trajs[j]
    return PlanResult(chosen, deduce_decision(chosen, model.tess_cfg.d_lane), j, targets, costs,
                      selection_probabilities(costs))


def plan_result_to_dict(result: PlanResult) -> dict:
    return {
        "decision": result.decision.value,
        "index": result.index,
        "target": list(result.targets[result.index]),
        "trajectory": {"dt": result.trajectory.dt, "points": result.trajectory.points.tolist()},
        "candidates": [
            {"target": list(t), "cost": float(c), "probability": float(p)}
            for t, c, p in zip(result.targets, result.costs, result.probabilities)
        ],
    }
