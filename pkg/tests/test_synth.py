from collections import Counter
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hlplan.core import Behavior, validate_sample
from hlplan.workbench.synth import (DEFAULT_LABEL_MIX, ScenarioRanges, SynthConfig, SynthesisError, draw_situation,
                                    oracle_select, split, synthesize_dataset)

from conftest import make_situation


def test_label_mix_is_exact(small_dataset):
    counts = Counter(s.label.value for s in small_dataset)
    assert counts == {"CF": 20, "LLC": 15, "RLC": 15}
    assert all(not validate_sample(s) for s in small_dataset)
    assert len({s.id for s in small_dataset}) == len(small_dataset)


def test_noise_free_gt_is_the_oracle_choice():
    cfg = SynthConfig(label_mix={"CF": 3, "LLC": 3, "RLC": 3}, seed=2)
    for s in synthesize_dataset(cfg):
        choice = oracle_select(s.situation, cfg)
        np.testing.assert_array_equal(s.gt.points, choice.trajectory.points)


def test_jitter_keeps_first_point():
    cfg = SynthConfig(label_mix={"CF": 2, "LLC": 2, "RLC": 2}, seed=3, noise_lat=0.2, noise_lon=0.5)
    for s in synthesize_dataset(cfg):
        assert np.array_equal(s.gt.points[0], s.situation.ego.as_tuple())
        assert not np.array_equal(s.gt.points, oracle_select(s.situation, replace(cfg, noise_lat=0, noise_lon=0)).trajectory.points)


def test_same_seed_same_data():
    cfg = SynthConfig(label_mix={"CF": 4, "LLC": 3, "RLC": 3}, seed=11, lane_noise=0.1, noise_lat=0.1)
    a, b = synthesize_dataset(cfg), synthesize_dataset(cfg)
    assert [s.id for s in a] == [s.id for s in b]
    assert all(np.array_equal(x.gt.points, y.gt.points) and x.situation == y.situation for x, y in zip(a, b))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_drawn_situations_are_valid(seed):
    from hlplan.core import validate_situation
    sit = draw_situation(np.random.default_rng(seed), ScenarioRanges())
    assert validate_situation(sit) == []


def test_hidden_rule_penalizes_staying_behind_close_leader():
    sit = make_situation(vs=15.0, cf=(35.0, 0.0, 13.0), lf=(45.0, 3.5, 10.0), rf=(45.0, -3.5, 10.0))
    plain = oracle_select(sit, SynthConfig())
    assert plain.trajectory.target_lane.value == "CURRENT"
    pushed = oracle_select(sit, SynthConfig(hidden_incentive=50.0))
    assert pushed.trajectory.target_lane.value != "CURRENT"


def test_tau_restriction():
    sit = make_situation(vs=15.0)
    choice = oracle_select(sit, SynthConfig(cf_taus=(9.0,)))
    assert choice.targets[choice.index][2] == 9.0
    with pytest.raises(SynthesisError):
        oracle_select(make_situation(vs=15.0, road=1), SynthConfig(cf_taus=(20.0,), lc_taus=(20.0,)))


def test_lane_noise_needs_rng():
    with pytest.raises(ValueError):
        oracle_select(make_situation(), SynthConfig(lane_noise=1.0))


def test_unreachable_mix_fails():
    with pytest.raises(SynthesisError, match="still missing"):
        synthesize_dataset(SynthConfig(label_mix={"LLC": 5}, max_draws=3))


def test_config_validation_and_round_trip():
    with pytest.raises(ValueError):
        SynthConfig(label_mix={"XLC": 3})
    with pytest.raises(ValueError):
        SynthConfig(noise_lat=-1)
    with pytest.raises(ValueError):
        ScenarioRanges(ego_speed=(5.0, 20.0))
    cfg = SynthConfig(lc_taus=(6.0, 7.0), seed=4)
    assert SynthConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ValueError):
        SynthConfig.from_dict({"bogus": 1})
    assert sum(DEFAULT_LABEL_MIX.values()) == 413


def test_split_is_stratified_and_disjoint(small_dataset):
    train, test = split(small_dataset, {"CF": 10, "LLC": 8, "RLC": 8}, {"CF": 10, "LLC": 7, "RLC": 7}, seed=1)
    assert Counter(s.label.value for s in train) == {"CF": 10, "LLC": 8, "RLC": 8}
    assert Counter(s.label.value for s in test) == {"CF": 10, "LLC": 7, "RLC": 7}
    assert not {s.id for s in train} & {s.id for s in test}
    order = [s.id for s in small_dataset]
    assert [s.id for s in train] == sorted((s.id for s in train), key=order.index)
    with pytest.raises(ValueError):
        split(small_dataset, {"CF": 30}, {}, seed=0)
