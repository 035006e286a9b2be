"""Synthetic driving samples produced by a known cost function (the oracle).

Scenarios are drawn from simple ranges; the oracle costs the full three-way
candidate set with fixed weights on the raw traditional base terms and picks the
cheapest candidate. Optional extras make the data harder to fit:

* a hidden impatience term the traditional costs cannot express: ending up
  behind a leader closer than ``hidden_gap`` metres costs ``hidden_incentive``
  per m/s that leader is slower than the ego vehicle,
* Gumbel noise per lane, so the decision itself is partly random,
* Gaussian jitter on the recorded positions (the first point is left exact).

Scenarios are kept or rejected so the output has exactly ``label_mix`` samples
of each behavior.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, fields
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..core import D_LANE, DT, Behavior, DrivingSituation, FrenetState, HumanDrivingSample, Lane, Trajectory, validate_sample
from ..costs import N_TRAD, CostConfig, base_costs
from ..trajgen import THREE_WAY, TessellationConfig, build_candidate, tessellate

logger = logging.getLogger(__name__)

# lon_jerk, lat_jerk, lon_acc, lat_acc, c_v, c_safe on raw (unnormalized) terms
DEFAULT_ORACLE_WEIGHTS = (1.0, 0.5, 1.0, 0.5, 2.0, 20.0)
DEFAULT_LABEL_MIX = {"LLC": 135, "RLC": 135, "CF": 143}


class SynthesisError(RuntimeError):
    pass


@dataclass(frozen=True)
class ScenarioRanges:
    ego_speed: Tuple[float, float] = (8.0, 22.0)
    ego_offset: Tuple[float, float] = (-0.2, 0.2)
    ego_acc: Tuple[float, float] = (-0.5, 0.5)
    road_probs: Tuple[float, float, float] = (0.2, 0.6, 0.2)  # road -1, 0, 1
    occupancy: float = 0.6
    front_gap: Tuple[float, float] = (8.0, 80.0)
    back_gap: Tuple[float, float] = (8.0, 60.0)
    front_rel_speed: Tuple[float, float] = (-8.0, 3.0)
    back_rel_speed: Tuple[float, float] = (-3.0, 5.0)
    vehicle_offset: Tuple[float, float] = (-0.2, 0.2)

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple) and f.name != "road_probs" and not value[0] < value[1]:
                raise ValueError(f"range {f.name} is degenerate: {value}")
        if not 0 <= self.occupancy <= 1:
            raise ValueError("occupancy must be a probability")
        if min(self.road_probs) < 0 or not np.isclose(sum(self.road_probs), 1.0):
            raise ValueError("road_probs must be a probability vector")
        if self.ego_speed[0] < 8.0:
            raise ValueError("ego speeds below 8 m/s are never valid samples")


@dataclass(frozen=True)
class SynthConfig:
    oracle_weights: Tuple[float, ...] = DEFAULT_ORACLE_WEIGHTS
    ranges: ScenarioRanges = ScenarioRanges()
    label_mix: Dict[str, int] = field(default_factory=lambda: dict(DEFAULT_LABEL_MIX))
    noise_lat: float = 0.0
    noise_lon: float = 0.0
    lane_noise: float = 0.0
    hidden_incentive: float = 0.0
    hidden_gap: float = 40.0
    cf_taus: Optional[Tuple[float, ...]] = None  # allowed oracle durations; None = all
    lc_taus: Optional[Tuple[float, ...]] = None
    seed: int = 0
    max_draws: int = 200_000

    def __post_init__(self):
        if len(self.oracle_weights) != N_TRAD:
            raise ValueError(f"oracle weights need {N_TRAD} entries")
        if set(self.label_mix) - {b.value for b in Behavior}:
            raise ValueError(f"unknown labels in label_mix: {sorted(self.label_mix)}")
        if any(int(v) != v or v < 0 for v in self.label_mix.values()):
            raise ValueError("label counts must be non-negative integers")
        if min(self.noise_lat, self.noise_lon, self.lane_noise, self.hidden_incentive) < 0:
            raise ValueError("noise levels must be non-negative")

    def to_dict(self) -> Dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict) -> "SynthConfig":
        data = dict(data)
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown synth config keys: {sorted(unknown)}")
        if "ranges" in data:
            data["ranges"] = ScenarioRanges(**{k: tuple(v) if isinstance(v, list) else v
                                               for k, v in data["ranges"].items()})
        for key in ("oracle_weights", "cf_taus", "lc_taus"):
            if data.get(key) is not None:
                data[key] = tuple(float(v) for v in data[key])
        return cls(**data)


def draw_situation(rng: np.random.Generator, ranges: ScenarioRanges, d_lane: float = D_LANE) -> DrivingSituation:
    r = ranges
    road = int(rng.choice([-1, 0, 1], p=r.road_probs))
    ego = FrenetState(0.0, rng.uniform(*r.ego_offset), rng.uniform(*r.ego_speed), 0.0, rng.uniform(*r.ego_acc), 0.0)
    env = {}
    for lane in (Lane.CURRENT, Lane.LEFT, Lane.RIGHT):
        if (lane is Lane.LEFT and road == -1) or (lane is Lane.RIGHT and road == 1):
            continue
        front, back = lane.slots
        for slot, sign, gaps, rels in ((front, 1.0, r.front_gap, r.front_rel_speed),
                                       (back, -1.0, r.back_gap, r.back_rel_speed)):
            if rng.uniform() >= r.occupancy:
                continue
            s = sign * rng.uniform(*gaps)
            vs = max(ego.vs + rng.uniform(*rels), 0.0)
            d = lane.offset_sign * d_lane + rng.uniform(*r.vehicle_offset)
            env[slot] = FrenetState(s, d, vs, 0.0, 0.0, 0.0)
    return DrivingSituation(ego, env, road)


def _front_gap(situation: DrivingSituation, lane: Lane) -> float:
    front = lane.slots[0]
    return situation.env[front].s if front in situation.env else np.inf


@dataclass
class OracleChoice:
    targets: List[Tuple[float, float, float]]
    trajectories: List[Trajectory]
    costs: np.ndarray
    index: int

    @property
    def trajectory(self) -> Trajectory:
        return self.trajectories[self.index]


def oracle_select(situation: DrivingSituation, cfg: SynthConfig, rng: Optional[np.random.Generator] = None,
                  tess: TessellationConfig = TessellationConfig(), dt: float = DT) -> OracleChoice:
    """The oracle's pick from the three-way candidate set.

    Lane noise needs ``rng``; without it the choice is a deterministic function
    of the situation.
    """
    targets = tessellate(situation, tess, THREE_WAY)
    trajs = [build_candidate(situation, t, dt, tess.d_lane) for t in targets]
    base = base_costs(trajs, situation, CostConfig())[:, :N_TRAD]
    costs = base @ np.asarray(cfg.oracle_weights, dtype=float)
    lanes = [t.target_lane for t in trajs]
    lane_term = {lane: 0.0 for lane in Lane}
    if cfg.hidden_incentive > 0:
        for lane in Lane:
            if _front_gap(situation, lane) < cfg.hidden_gap:
                deficit = situation.ego.vs - situation.env[lane.slots[0]].vs
                lane_term[lane] += cfg.hidden_incentive * max(deficit, 0.0)
    if cfg.lane_noise > 0:
        if rng is None:
            raise ValueError("lane noise needs a random generator")
        for lane in Lane:
            lane_term[lane] += cfg.lane_noise * rng.gumbel()
    costs = costs + np.array([lane_term[lane] for lane in lanes])
    allowed = np.ones(len(targets), dtype=bool)
    for k, (d_end, _, tau) in enumerate(targets):
        taus = cfg.cf_taus if lanes[k] is Lane.CURRENT else cfg.lc_taus
        if taus is not None:
            allowed[k] = any(abs(tau - t) < 1e-9 for t in taus)
    if not allowed.any():
        raise SynthesisError("no candidate has an allowed duration")
    masked = np.where(allowed, costs, np.inf)
    return OracleChoice(targets, trajs, costs, int(np.argmin(masked)))


def _jitter(traj: Trajectory, cfg: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    points = traj.points.copy()
    n = len(points) - 1
    if cfg.noise_lon > 0:
        points[1:, 0] += rng.normal(0.0, cfg.noise_lon, n)
    if cfg.noise_lat > 0:
        points[1:, 1] += rng.normal(0.0, cfg.noise_lat, n)
    return points


def synthesize_dataset(cfg: SynthConfig, tess: TessellationConfig = TessellationConfig(),
                       dt: float = DT) -> List[HumanDrivingSample]:
    """Exactly ``cfg.label_mix`` samples, in draw order, reproducible from ``cfg.seed``."""
    rng = np.random.default_rng(cfg.seed)
    remaining = {Behavior(k): int(v) for k, v in cfg.label_mix.items()}
    samples: List[HumanDrivingSample] = []
    draws = 0
    while any(remaining.values()):
        if draws >= cfg.max_draws:
            raise SynthesisError(f"label mix not reached after {draws} draws; still missing "
                                 + ", ".join(f"{b.value}={n}" for b, n in remaining.items() if n))
        draws += 1
        situation = draw_situation(rng, cfg.ranges, tess.d_lane)
        choice = oracle_select(situation, cfg, rng, tess, dt)
        label = Behavior.from_lane(choice.trajectory.target_lane)
        if not remaining.get(label):
            continue
        gt = Trajectory(dt, _jitter(choice.trajectory, cfg, rng))
        sample = HumanDrivingSample(f"syn{cfg.seed}-{len(samples):05d}", situation, gt, label)
        if validate_sample(sample, tess.d_lane):
            continue
        remaining[label] -= 1
        samples.append(sample)
    logger.info("synthesized %d samples from %d scenario draws", len(samples), draws)
    return samples


def split(samples: Sequence[HumanDrivingSample], train_counts: Dict[str, int], test_counts: Dict[str, int],
          seed: int = 0) -> Tuple[List[HumanDrivingSample], List[HumanDrivingSample]]:
    """Stratified random split without replacement; both parts keep the input order."""
    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for behavior in Behavior:
        n_train = int(train_counts.get(behavior.value, 0))
        n_test = int(test_counts.get(behavior.value, 0))
        members = [i for i, s in enumerate(samples) if s.label is behavior]
        if n_train + n_test > len(members):
            raise ValueError(f"need {n_train + n_test} {behavior.value} samples, have {len(members)}")
        chosen = rng.permutation(len(members))[:n_train + n_test]
        train_idx += [members[k] for k in chosen[:n_train]]
        test_idx += [members[k] for k in chosen[n_train:]]
    train = [samples[i] for i in sorted(train_idx)]
    test = [samples[i] for i in sorted(test_idx)]
    assert not {s.id for s in train} & {s.id for s in test}
    return train, test


DEFAULT_TRAIN_COUNTS = {"CF": 90, "LLC": 90, "RLC": 90}
DEFAULT_TEST_COUNTS = {"CF": 53, "LLC": 45, "RLC": 45}
