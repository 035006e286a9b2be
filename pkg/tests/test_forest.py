import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hlplan.core import Behavior, Lane
from hlplan.costs import CostConfig
from hlplan.forest import (N_FEATURES, THREE_WAY, TWO_WAY, ForestHyper, ForestModel, encode_situation, lane_costs,
                           pool_label, predict_proba, rf_incentive_cost, train_forest)

from conftest import make_situation, situations

FAST = ForestHyper(n_trees=15, min_leaf_grid=(1, 4), cv_folds=3)


def blobs(rng, n=60):
    """Three separable clusters in the 13-dim descriptor space."""
    labels = [Behavior.LLC, Behavior.CF, Behavior.RLC]
    data = []
    for i in range(n):
        lab = labels[i % 3]
        x = rng.normal(0, 1, N_FEATURES)
        x[0] += 10 * (i % 3)
        data.append((x, lab))
    return data


def test_encode_situation_virtual_and_missing():
    cfg = CostConfig()
    sit = make_situation(vs=15.0, road=1, cf=(30.0, 0.0, 12.0))
    x = encode_situation(sit, cfg)
    assert x.shape == (N_FEATURES,)
    assert x[0] == 15.0
    assert list(x[1:3]) == [30.0, -3.0]
    assert list(x[3:5]) == [cfg.virtual_distance, -cfg.virtual_speed]  # cb absent: falling back
    assert list(x[5:7]) == [cfg.virtual_distance, cfg.virtual_speed]  # lf absent: pulling away
    assert list(x[9:13]) == [0.0] * 4  # no right lane


def test_pool_label():
    assert pool_label(Behavior.LLC, TWO_WAY) == "LC"
    assert pool_label("CF", TWO_WAY) == "CF"
    assert pool_label(Behavior.RLC, THREE_WAY) == "RLC"
    with pytest.raises(ValueError):
        pool_label("LC", THREE_WAY)


def test_training_input_validation():
    rng = np.random.default_rng(0)
    data = blobs(rng)
    with pytest.raises(ValueError, match="degenerate"):
        train_forest([(x, Behavior.CF) for x, _ in data], THREE_WAY, FAST)
    with pytest.raises(ValueError, match="empty class"):
        train_forest([d for d in data if d[1] is not Behavior.RLC], THREE_WAY, FAST)
    with pytest.raises(ValueError):
        train_forest(data, "FOUR_WAY", FAST)


def test_separable_data_is_learned():
    rng = np.random.default_rng(1)
    model = train_forest(blobs(rng), THREE_WAY, FAST, seed=3)
    test = blobs(rng, 30)
    X = np.array([x for x, _ in test])
    assert model.predict(X) == [lab.value for _, lab in test]
    assert model.train_meta["min_samples_leaf"] in (1, 4)


def test_seed_determinism_and_round_trip():
    rng = np.random.default_rng(2)
    data = blobs(rng)
    a = train_forest(data, TWO_WAY, FAST, seed=5)
    b = train_forest(data, TWO_WAY, FAST, seed=5)
    c = train_forest(data, TWO_WAY, FAST, seed=6)
    assert json.dumps(a.to_dict()) == json.dumps(b.to_dict())
    assert json.dumps(a.to_dict()) != json.dumps(c.to_dict())
    back = ForestModel.from_dict(json.loads(json.dumps(a.to_dict())))
    X = np.array([x for x, _ in data])
    np.testing.assert_array_equal(back.predict_proba_batch(X), a.predict_proba_batch(X))


@settings(max_examples=25, deadline=None)
@given(situations())
def test_probabilities_and_lane_costs(sit):
    rng = np.random.default_rng(3)
    model = train_forest(blobs(rng), THREE_WAY, ForestHyper(n_trees=5, min_leaf_grid=(2,)), seed=0)
    p = predict_proba(model, encode_situation(sit))
    assert abs(sum(p.values()) - 1.0) <= 1e-12
    assert min(p.values()) > 0
    costs = lane_costs(model, sit)
    for lane in Lane:
        assert math.isfinite(costs[lane]) and costs[lane] > 0
        assert costs[lane] == rf_incentive_cost(model, sit, Behavior.from_lane(lane))


def test_two_way_lane_costs_share_lc():
    rng = np.random.default_rng(4)
    model = train_forest(blobs(rng), TWO_WAY, ForestHyper(n_trees=5, min_leaf_grid=(2,)), seed=0)
    costs = lane_costs(model, make_situation())
    assert costs[Lane.LEFT] == costs[Lane.RIGHT]


def test_single_tree_overfits():
    rng = np.random.default_rng(5)
    data = [(rng.normal(0, 1, N_FEATURES), [Behavior.LLC, Behavior.CF, Behavior.RLC][rng.integers(3)])
            for _ in range(80)]
    model = train_forest(data, THREE_WAY, ForestHyper(n_trees=1, min_leaf_grid=(1,), bootstrap=False))
    X = np.array([x for x, _ in data])
    assert model.predict(X) == [lab.value for _, lab in data]


def test_uniform_model_scores_about_a_third():
    from hlplan.forest import Tree
    from hlplan.workbench.experiments import evaluate_forest
    from hlplan.workbench.synth import SynthConfig, synthesize_dataset
    leaf = Tree(np.array([-1]), np.zeros(1), np.array([-1]), np.array([-1]), np.array([[5, 5, 5]]))
    model = ForestModel(THREE_WAY, [leaf])
    samples = synthesize_dataset(SynthConfig(label_mix={"CF": 10, "LLC": 10, "RLC": 10}, seed=1))
    report = evaluate_forest(model, samples)
    # equal probabilities: argmax always picks the first class
    assert report.overall_accuracy == pytest.approx(1 / 3)
    with pytest.raises(ValueError):
        evaluate_forest(model, [])
