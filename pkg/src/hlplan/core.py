"""Shared domain types: Frenet states, driving situations, trajectories, samples.

Coordinates are in a road-aligned Frenet frame whose longitudinal origin is the
ego position at planning time. The lateral coordinate ``d`` is measured from the
center of the ego's current lane and is positive toward the left lane.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np

D_LANE = 3.5
DT = 0.1
V_MAX = 22.2
MIN_EGO_SPEED = 8.0
LANE_TOL = 0.5

SLOTS = ("cf", "cb", "lf", "lb", "rf", "rb")
STATE_FIELDS = ("s", "d", "vs", "vd", "as", "ad")


class Lane(str, enum.Enum):
    LEFT = "LEFT"
    CURRENT = "CURRENT"
    RIGHT = "RIGHT"

    @property
    def offset_sign(self) -> int:
        return {"LEFT": 1, "CURRENT": 0, "RIGHT": -1}[self.value]

    @property
    def slots(self) -> Tuple[str, str]:
        """(front, back) slot ids for vehicles in this lane."""
        return {"LEFT": ("lf", "lb"), "CURRENT": ("cf", "cb"), "RIGHT": ("rf", "rb")}[self.value]


class Behavior(str, enum.Enum):
    LLC = "LLC"
    CF = "CF"
    RLC = "RLC"

    @property
    def lane(self) -> Lane:
        return {"LLC": Lane.LEFT, "CF": Lane.CURRENT, "RLC": Lane.RIGHT}[self.value]

    @classmethod
    def from_lane(cls, lane: Lane) -> "Behavior":
        return {Lane.LEFT: cls.LLC, Lane.CURRENT: cls.CF, Lane.RIGHT: cls.RLC}[lane]


@dataclass(frozen=True)
class FrenetState:
    s: float
    d: float
    vs: float
    vd: float = 0.0
    as_: float = 0.0
    ad: float = 0.0

    def as_tuple(self) -> Tuple[float, float, float, float, float, float]:
        return (self.s, self.d, self.vs, self.vd, self.as_, self.ad)

    @classmethod
    def from_sequence(cls, values: Sequence[float]) -> "FrenetState":
        s, d, vs, vd, as_, ad = (float(v) for v in values)
        return cls(s, d, vs, vd, as_, ad)

    def is_finite(self) -> bool:
        return all(math.isfinite(v) for v in self.as_tuple())


@dataclass(frozen=True)
class VehicleSlot:
    slot_id: str
    state: Optional[FrenetState] = None

    @property
    def present(self) -> bool:
        return self.state is not None


@dataclass(frozen=True)
class DrivingSituation:
    """Ego state, the six neighbouring vehicles and the road-position flag.

    ``road`` is -1 when the ego drives on the leftmost lane (no left lane),
    1 on the rightmost lane (no right lane) and 0 otherwise. Missing vehicles
    are simply absent from ``env``; use :meth:`slot` to get an explicit
    :class:`VehicleSlot` with ``state=None``.
    """

    ego: FrenetState
    env: Mapping[str, FrenetState] = field(default_factory=dict)
    road: int = 0

    def __post_init__(self):
        object.__setattr__(self, "env", dict(sorted(self.env.items(), key=lambda kv: SLOTS.index(kv[0]) if kv[0] in SLOTS else 99)))

    def slot(self, slot_id: str) -> VehicleSlot:
        return VehicleSlot(slot_id, self.env.get(slot_id))

    def slots(self) -> List[VehicleSlot]:
        return [self.slot(q) for q in SLOTS]

    def present(self) -> Iterator[Tuple[str, FrenetState]]:
        for q in SLOTS:
            if q in self.env:
                yield q, self.env[q]

    def lane_exists(self, lane: Lane) -> bool:
        if lane is Lane.LEFT:
            return self.road != -1
        if lane is Lane.RIGHT:
            return self.road != 1
        return True

    def available_lanes(self) -> List[Lane]:
        return [lane for lane in (Lane.RIGHT, Lane.CURRENT, Lane.LEFT) if self.lane_exists(lane)]

    def __hash__(self):
        return hash((self.ego, tuple(self.env.items()), self.road))


class Trajectory:
    """Time-discretized trajectory with points ``(s, d, vs, vd, as, ad)``.

    ``jerk`` optionally carries the analytic (longitudinal, lateral) jerk at
    each point; trajectories read from data have none and comfort costs fall
    back to differencing the accelerations.
    """

    __slots__ = ("dt", "points", "target_lane", "jerk")

    def __init__(self, dt: float, points, target_lane: Optional[Lane] = None, jerk=None):
        pts = np.array(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 6 or len(pts) == 0:
            raise ValueError("trajectory points must be a nonempty (n, 6) array")
        if not dt > 0:
            raise ValueError("dt must be positive")
        pts.setflags(write=False)
        if jerk is not None:
            jerk = np.array(jerk, dtype=float)
            if jerk.shape != (len(pts), 2):
                raise ValueError("jerk must have shape (n, 2)")
            jerk.setflags(write=False)
        self.dt = float(dt)
        self.points = pts
        self.target_lane = target_lane
        self.jerk = jerk

    def __len__(self) -> int:
        return len(self.points)

    def __repr__(self) -> str:
        lane = self.target_lane.value if self.target_lane else None
        return f"Trajectory(n={len(self)}, dt={self.dt}, tau={self.duration:.3f}, target_lane={lane})"

    @property
    def duration(self) -> float:
        return (len(self.points) - 1) * self.dt

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.points)) * self.dt

    @property
    def s(self) -> np.ndarray:
        return self.points[:, 0]

    @property
    def d(self) -> np.ndarray:
        return self.points[:, 1]

    @property
    def vs(self) -> np.ndarray:
        return self.points[:, 2]

    @property
    def vd(self) -> np.ndarray:
        return self.points[:, 3]

    @property
    def acc_s(self) -> np.ndarray:
        return self.points[:, 4]

    @property
    def acc_d(self) -> np.ndarray:
        return self.points[:, 5]

    def state(self, k: int) -> FrenetState:
        return FrenetState.from_sequence(self.points[k])

    def states(self) -> List[FrenetState]:
        return [FrenetState.from_sequence(p) for p in self.points]

    def same_motion(self, other: "Trajectory", tol: float = 1e-6) -> bool:
        return (
            len(self) == len(other)
            and abs(self.dt - other.dt) < 1e-12
            and bool(np.all(np.abs(self.points - other.points) <= tol))
        )


@dataclass(frozen=True)
class HumanDrivingSample:
    id: str
    situation: DrivingSituation
    gt: Trajectory
    label: Behavior


def validate_situation(situation: DrivingSituation) -> List[str]:
    problems = []
    ego = situation.ego
    if not ego.is_finite():
        problems.append("ego state not finite")
    else:
        if ego.s != 0.0:
            problems.append("ego s must be 0")
        if ego.vs < MIN_EGO_SPEED:
            problems.append(f"ego speed below {MIN_EGO_SPEED:g} m/s")
    if situation.road not in (-1, 0, 1):
        problems.append(f"road flag {situation.road!r} not in (-1, 0, 1)")
    for q, st in situation.env.items():
        if q not in SLOTS:
            problems.append(f"unknown slot {q!r}")
        elif not st.is_finite():
            problems.append(f"{q} state not finite")
    if situation.road == -1 and any(q in situation.env for q in ("lf", "lb")):
        problems.append("left lane marked absent but lf occupied" if "lf" in situation.env
                        else "left lane marked absent but lb occupied")
    if situation.road == 1 and any(q in situation.env for q in ("rf", "rb")):
        problems.append("right lane marked absent but rf occupied" if "rf" in situation.env
                        else "right lane marked absent but rb occupied")
    return problems


def validate_sample(sample: HumanDrivingSample, d_lane: float = D_LANE) -> List[str]:
    """Return human-readable invariant violations; an empty list means valid."""
    problems = validate_situation(sample.situation)
    gt = sample.gt
    if not np.all(np.isfinite(gt.points)):
        problems.append("gt trajectory not finite")
        return problems
    if len(gt) < 2:
        problems.append("gt trajectory needs at least 2 points")
    start = np.array(sample.situation.ego.as_tuple())
    if sample.situation.ego.is_finite() and np.max(np.abs(gt.points[0] - start)) > 1e-6:
        problems.append("gt first point does not match ego state")
    expected = sample.label.lane.offset_sign * d_lane
    if abs(gt.d[-1] - expected) >= LANE_TOL:
        problems.append(f"label {sample.label.value} inconsistent with gt terminal d={gt.d[-1]:.3f}")
    return problems


def situation_to_dict(situation: DrivingSituation) -> Dict:
    ego = situation.ego
    return {
        "road": situation.road,
        "ego": dict(zip(STATE_FIELDS, ego.as_tuple())),
        "env": {q: (dict(zip(STATE_FIELDS, situation.env[q].as_tuple())) if q in situation.env else None)
                for q in SLOTS},
    }


def situation_from_dict(data: Mapping) -> DrivingSituation:
    def state(obj) -> FrenetState:
        return FrenetState.from_sequence([obj[k] for k in STATE_FIELDS])

    env = {}
    for q, obj in (data.get("env") or {}).items():
        if q not in SLOTS:
            raise ValueError(f"unknown slot {q!r}")
        if obj is not None:
            env[q] = state(obj)
    road = data["road"]
    if not isinstance(road, int) or isinstance(road, bool):
        raise ValueError("road must be an integer")
    return DrivingSituation(ego=state(data["ego"]), env=env, road=road)
