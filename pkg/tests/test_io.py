import json

import numpy as np
import pytest

from hlplan.costs import CostConfig, Variant, WeightVector
from hlplan.forest import THREE_WAY as RF3
from hlplan.forest import ForestHyper
from hlplan.learner import PipelineConfig
from hlplan.planner import PlannerModel
from hlplan.workbench.experiments import train_forest_on
from hlplan.workbench.io import (DataError, load_model, load_samples, model_from_dict, model_to_dict, sample_from_dict,
                                 sample_to_dict, save_model, save_samples)


def test_samples_round_trip(tmp_path, small_dataset):
    path = tmp_path / "s.jsonl"
    save_samples(small_dataset, path)
    back = load_samples(path)
    assert [s.id for s in back] == [s.id for s in small_dataset]
    for a, b in zip(back, small_dataset):
        assert a.situation == b.situation and a.label is b.label
        np.testing.assert_array_equal(a.gt.points, b.gt.points)


def test_invalid_samples_are_skipped(tmp_path, small_dataset, caplog):
    rows = [sample_to_dict(s) for s in small_dataset[:3]]
    rows[1]["ego"]["vs"] = 2.0
    path = tmp_path / "s.jsonl"
    path.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
    back = load_samples(path)
    assert [s.id for s in back] == [rows[0]["id"], rows[2]["id"]]
    assert any(rows[1]["id"] in rec.message for rec in caplog.records)


def test_malformed_line_reports_line_number(tmp_path, small_dataset):
    path = tmp_path / "s.jsonl"
    path.write_text(json.dumps(sample_to_dict(small_dataset[0])) + "\n{not json\n")
    with pytest.raises(DataError, match="2"):
        load_samples(path)
    with pytest.raises(DataError):
        load_samples(tmp_path / "missing.jsonl")


def test_mixed_dt_rejected(tmp_path, small_dataset):
    rows = [sample_to_dict(s) for s in small_dataset[:2]]
    rows[1]["gt"]["dt"] = 0.05
    path = tmp_path / "s.jsonl"
    path.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
    with pytest.raises(DataError):
        load_samples(path)


def test_model_round_trip(tmp_path, small_dataset):
    forest = train_forest_on(small_dataset, RF3, PipelineConfig(), ForestHyper(n_trees=3, min_leaf_grid=(2,)))
    cfg = CostConfig(K=2, normalizers=tuple(np.linspace(0.5, 2, 10)))
    model = PlannerModel(Variant.F3, WeightVector(Variant.F3, 2, np.arange(13.0)), cfg, forest=forest)
    path = tmp_path / "m.json"
    save_model(model, path, {"seed": 1})
    back = load_model(path)
    assert back.variant is Variant.F3 and back.K == 2
    np.testing.assert_array_equal(back.weights.weights, model.weights.weights)
    assert back.cost_cfg == model.cost_cfg
    assert json.dumps(model_to_dict(back)["forest"], sort_keys=True) == json.dumps(model_to_dict(model)["forest"], sort_keys=True)
    assert json.loads(path.read_text())["meta"] == {"seed": 1}


def test_model_errors(tmp_path):
    model = PlannerModel(Variant.F0, WeightVector.zeros(Variant.F0, 1), CostConfig(K=1))
    data = model_to_dict(model)
    data["weights"] = [0.0]
    with pytest.raises((DataError, ValueError)):
        model_from_dict(data)
    bad = tmp_path / "bad.json"
    bad.write_text("[")
    with pytest.raises(DataError):
        load_model(bad)


def test_saved_model_plans_identically(tmp_path, small_dataset):
    from hlplan.planner import plan, plan_result_to_dict
    from hlplan.trajgen import THREE_WAY
    forest = train_forest_on(small_dataset, RF3, PipelineConfig(), ForestHyper(n_trees=3, min_leaf_grid=(2,)))
    rng = np.random.default_rng(0)
    cfg = CostConfig(K=2, normalizers=tuple(rng.uniform(0.5, 2, 10)))
    model = PlannerModel(Variant.F3, WeightVector(Variant.F3, 2, rng.normal(0, 1, 13)), cfg, forest=forest)
    save_model(model, tmp_path / "m.json")
    back = load_model(tmp_path / "m.json")
    for s in small_dataset[:5]:
        a = json.dumps(plan_result_to_dict(plan(s.situation, model, THREE_WAY)))
        b = json.dumps(plan_result_to_dict(plan(s.situation, back, THREE_WAY)))
        assert a == b
