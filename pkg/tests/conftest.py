import numpy as np
import pytest
from hypothesis import strategies as st

from hlplan.core import FrenetState, DrivingSituation, Behavior, HumanDrivingSample, Trajectory
from hlplan.costs import N_BASE, Variant
from hlplan.learner import BaseCache, assemble
from hlplan.workbench.synth import SynthConfig, synthesize_dataset

ACCEPTANCE_RESULTS = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")


def make_situation(vs=15.0, road=0, d=0.0, as_=0.0, **env):
    return DrivingSituation(FrenetState(0.0, d, vs, 0.0, as_, 0.0),
                            {q: FrenetState(*v) if isinstance(v, tuple) else v for q, v in env.items()}, road)


@st.composite
def situations(draw, min_vs=8.0):
    road = draw(st.sampled_from([-1, 0, 1]))
    vs = draw(st.floats(min_vs, 22.0))
    d = draw(st.floats(-0.4, 0.4))
    env = {}
    for q, lane_d in (("cf", 0.0), ("cb", 0.0), ("lf", 3.5), ("lb", 3.5), ("rf", -3.5), ("rb", -3.5)):
        if (q[0] == "l" and road == -1) or (q[0] == "r" and road == 1):
            continue
        if draw(st.booleans()):
            sign = 1.0 if q.endswith("f") else -1.0
            gap = draw(st.floats(5.0, 100.0))
            env[q] = FrenetState(sign * gap, lane_d, draw(st.floats(0.0, 30.0)))
    return DrivingSituation(FrenetState(0.0, d, vs, 0.0, draw(st.floats(-1.0, 1.0)), 0.0), env, road)


def random_base_cache(rng, m, n, heuristic=True):
    """Base cache with random raw terms and distances, ``n`` candidates per sample."""
    base = []
    for _ in range(m):
        b = rng.uniform(0.0, 1.5, (n, N_BASE))
        if heuristic:
            b[:, 6:] = rng.uniform(-3.0, 3.0, (n, N_BASE - 6))
        base.append(b)
    dist = [rng.uniform(0.0, 5.0, n) for _ in range(m)]
    lanes = [rng.integers(0, 3, n) for _ in range(m)]
    return BaseCache([f"s{i}" for i in range(m)], ["CF"] * m, base, dist, lanes,
                     [[(0.0, 10.0, 6.0)] * n for _ in range(m)])


def random_cache(rng, m=3, n=10, variant=Variant.F0, K=1):
    return assemble(random_base_cache(rng, m, n), variant, K)


@pytest.fixture(scope="session")
def small_dataset():
    cfg = SynthConfig(label_mix={"CF": 20, "LLC": 15, "RLC": 15}, seed=7, noise_lat=0.05, noise_lon=0.1)
    return synthesize_dataset(cfg)
