"""Experiment harnesses: train on one split, evaluate trajectories and decisions on another."""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..core import Behavior, HumanDrivingSample, Lane
from ..costs import Variant, WeightVector, compute_normalizers
from ..forest import THREE_WAY as RF3
from ..forest import TWO_WAY as RF2
from ..forest import ForestHyper, ForestModel, encode_situation, pool_label, train_forest
from ..learner import (BaseCache, FitConfig, FitResult, PipelineConfig, SampleCache, assemble, build_base_cache,
                       build_cache, fit, forest_costs_for)
from ..planner import PlannerModel
from ..trajgen import LANE_CHANGE_ONLY, THREE_WAY, PlanningMode
from .synth import SynthConfig, split, synthesize_dataset

logger = logging.getLogger(__name__)

HIST_BIN = 0.25
TRAIN_FIT = FitConfig(start="nearest")
LANE_ORDER = (Lane.LEFT, Lane.CURRENT, Lane.RIGHT)


class Experiment(str, enum.Enum):
    """EXP1: target lane given; EXP2: choose left or right; EXP3: choose among all three."""

    EXP1 = "1"
    EXP2 = "2"
    EXP3 = "3"

    @property
    def variants(self) -> Tuple[Variant, ...]:
        return {"1": (Variant.F0,), "2": (Variant.F0, Variant.F1)}.get(self.value, tuple(Variant))

    @property
    def classes(self) -> Tuple[str, ...]:
        return ("LLC", "RLC") if self is Experiment.EXP2 else ("LLC", "CF", "RLC")

    def mode(self):
        if self is Experiment.EXP1:
            return lambda sample: PlanningMode.target(sample.label.lane)
        return LANE_CHANGE_ONLY if self is Experiment.EXP2 else THREE_WAY

    def select(self, samples: Sequence[HumanDrivingSample]) -> List[HumanDrivingSample]:
        """Samples the experiment applies to (lane changes only for EXP2)."""
        if self is Experiment.EXP2:
            return [s for s in samples if s.label is not Behavior.CF]
        return list(samples)


@dataclass
class ConfusionReport:
    """Rows are true classes, columns predicted classes."""

    classes: Tuple[str, ...]
    matrix: np.ndarray

    @classmethod
    def from_labels(cls, labels: Sequence[str], predicted: Sequence[str], classes: Sequence[str]) -> "ConfusionReport":
        if not len(labels):
            raise ValueError("empty evaluation set")
        index = {c: i for i, c in enumerate(classes)}
        matrix = np.zeros((len(classes), len(classes)), dtype=np.int64)
        for t, p in zip(labels, predicted):
            matrix[index[t], index[p]] += 1
        return cls(tuple(classes), matrix)

    @property
    def overall_accuracy(self) -> float:
        return float(np.trace(self.matrix) / self.matrix.sum())

    def precision(self) -> Dict[str, Optional[float]]:
        cols = self.matrix.sum(axis=0)
        return {c: (float(self.matrix[i, i] / cols[i]) if cols[i] else None) for i, c in enumerate(self.classes)}

    def recall(self) -> Dict[str, Optional[float]]:
        rows = self.matrix.sum(axis=1)
        return {c: (float(self.matrix[i, i] / rows[i]) if rows[i] else None) for i, c in enumerate(self.classes)}

    def to_dict(self) -> Dict:
        return {"classes": list(self.classes), "matrix": self.matrix.tolist(), "precision": self.precision(),
                "recall": self.recall(), "overall_accuracy": self.overall_accuracy}

    def to_csv(self) -> str:
        lines = ["true\\predicted," + ",".join(self.classes)]
        lines += [c + "," + ",".join(str(v) for v in row) for c, row in zip(self.classes, self.matrix)]
        return "\n".join(lines) + "\n"


def histogram(values, bin_width: float = HIST_BIN) -> Dict:
    values = np.asarray(values, dtype=float)
    n_bins = int(np.floor(values.max() / bin_width)) + 1 if values.size else 0
    counts = np.bincount(np.floor(values / bin_width).astype(np.int64), minlength=n_bins)
    return {"bin_width": bin_width, "counts": counts.tolist()}


@dataclass
class EvalReport:
    exp: Experiment
    variant: Variant
    ids: List[str]
    labels: List[str]
    decisions: List[str]
    selected: List[int]
    min_dist: np.ndarray
    min_cost: np.ndarray
    all_dist: List[np.ndarray]
    confusion: ConfusionReport

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def mean_min_dist(self) -> float:
        return float(np.mean(self.min_dist))

    @property
    def mean_min_cost(self) -> float:
        return float(np.mean(self.min_cost))

    @property
    def mean_all_dist(self) -> float:
        return float(np.mean(np.concatenate(self.all_dist)))

    @property
    def exact_match_rate(self) -> float:
        """Share of samples whose selected candidate is also the closest one."""
        return float(np.mean(self.min_cost <= self.min_dist))

    def to_dict(self) -> Dict:
        return {
            "experiment": self.exp.value,
            "variant": self.variant.value,
            "n_samples": len(self),
            "mean_min_dist": self.mean_min_dist,
            "mean_min_cost": self.mean_min_cost,
            "mean_all_dist": self.mean_all_dist,
            "exact_match_rate": self.exact_match_rate,
            "histograms": {"all_dist": histogram(np.concatenate(self.all_dist)),
                           "min_dist": histogram(self.min_dist), "min_cost": histogram(self.min_cost)},
            "confusion": self.confusion.to_dict(),
            "samples": [{"id": i, "label": lab, "decision": dec, "selected": int(sel), "min_dist": float(md),
                         "min_cost": float(mc)}
                        for i, lab, dec, sel, md, mc in zip(self.ids, self.labels, self.decisions, self.selected,
                                                            self.min_dist, self.min_cost)],
        }


def evaluate_cache(cache: SampleCache, weights: WeightVector, exp: Experiment) -> EvalReport:
    """Select the minimum-cost candidate per sample (lowest index on ties) and score it."""
    w = weights.weights
    selected, decisions, min_dist, min_cost, all_dist = [], [], [], [], []
    for i in range(len(cache)):
        d = cache.sample_dist(i)
        j = int(np.argmin(cache.sample_costs(i) @ w))
        selected.append(j)
        decisions.append(Behavior.from_lane(LANE_ORDER[cache.base.lanes[i][j]]).value)
        min_dist.append(d.min())
        min_cost.append(d[j])
        all_dist.append(d)
    confusion = ConfusionReport.from_labels(cache.base.labels, decisions, exp.classes)
    return EvalReport(exp, cache.variant, list(cache.base.ids), list(cache.base.labels), decisions, selected,
                      np.array(min_dist), np.array(min_cost), all_dist, confusion)


def evaluate_model(model: PlannerModel, samples: Sequence[HumanDrivingSample], exp: Experiment) -> EvalReport:
    samples = exp.select(samples)
    cfgs = PipelineConfig(model.tess_cfg, model.cost_cfg, model.metric_cfg)
    cache = build_cache(samples, exp.mode(), model.variant, cfgs, model.forest, model.cost_cfg.normalizers)
    return evaluate_cache(cache, model.weights, exp)


def forest_pool(variant: Variant) -> Optional[str]:
    return {2: RF2, 3: RF3}.get(variant.forest_ways)


def train_forest_on(samples: Sequence[HumanDrivingSample], pool: str, cfgs: PipelineConfig,
                    hyper: ForestHyper = ForestHyper(), seed: int = 0) -> ForestModel:
    data = [(encode_situation(s.situation, cfgs.cost), s.label) for s in samples]
    return train_forest(data, pool, hyper, seed)


def fit_growing_k(base: BaseCache, variant: Variant, K: int, normalizers: Sequence[float],
                  rf: Optional[List[np.ndarray]] = None, fit_cfg: FitConfig = FitConfig()
                  ) -> Tuple[SampleCache, FitResult]:
    """Fit with 1, 2, ..., K powers, each warm-started from the previous optimum.

    Higher powers only enter once the lower-order fit has settled, and the loss
    can only go down from one order to the next. An explicit ``fit_cfg.init``
    skips the staging and fits order ``K`` directly from it.
    """
    if fit_cfg.init is not None:
        cache = assemble(base, variant, K, normalizers, rf)
        return cache, fit(cache, fit_cfg)
    result = None
    for k in range(1, K + 1):
        cache = assemble(base, variant, k, normalizers, rf)
        init = result.weights.expand_k(k) if result is not None else None
        result = fit(cache, replace(fit_cfg, init=init))
    return cache, result


@dataclass
class ExperimentResult:
    model: PlannerModel
    fit: FitResult
    train_report: EvalReport
    test_report: Optional[EvalReport]


def run_experiment(exp: Experiment, variant: Variant, train: Sequence[HumanDrivingSample],
                   test: Sequence[HumanDrivingSample], cfgs: PipelineConfig = PipelineConfig(), seed: int = 0,
                   fit_cfg: FitConfig = TRAIN_FIT, forest_hyper: ForestHyper = ForestHyper(),
                   forest: Optional[ForestModel] = None) -> ExperimentResult:
    """Train a cost model for ``exp``/``variant`` on ``train`` and evaluate on ``test``.

    F2/F3 first train a two-/three-way forest on the same training split unless
    one is passed in; the training cache then uses the forest's out-of-bag
    probabilities.
    """
    exp = Experiment(exp)
    variant = Variant(variant)
    if variant not in exp.variants:
        raise ValueError(f"variant {variant.value} is not part of experiment {exp.value}")
    train = exp.select(train)
    pool = forest_pool(variant)
    train_proba = None
    if pool is None:
        forest = None
    elif forest is None:
        forest = train_forest_on(train, pool, cfgs, forest_hyper, seed)
        # in-sample forest probabilities are overconfident; the cost weights are
        # fitted against out-of-bag ones so they match what held-out data sees
        train_proba = forest.oob_proba
    elif forest.decision_pool != pool:
        raise ValueError(f"variant {variant.value} needs a {pool} forest")
    base = build_base_cache(train, exp.mode(), cfgs)
    rf = forest_costs_for(base, train, forest, cfgs.cost, train_proba) if forest is not None else None
    cache, result = fit_growing_k(base, variant, cfgs.cost.K, compute_normalizers(base.base), rf, fit_cfg)
    model = PlannerModel(variant, result.weights, cfgs.cost.with_normalizers(cache.normalizers), cfgs.tess,
                         cfgs.metric, forest)
    train_report = evaluate_cache(cache, result.weights, exp)
    test_report = evaluate_model(model, test, exp) if exp.select(test) else None
    return ExperimentResult(model, result, train_report, test_report)


def evaluate_forest(model: ForestModel, samples: Sequence[HumanDrivingSample], cfgs: PipelineConfig = PipelineConfig()
                    ) -> ConfusionReport:
    """Argmax decisions against labels; two-way models score LLC/RLC labels as LC."""
    if not samples:
        raise ValueError("empty evaluation set")
    X = np.array([encode_situation(s.situation, cfgs.cost) for s in samples])
    labels = [pool_label(s.label, model.decision_pool) for s in samples]
    return ConfusionReport.from_labels(labels, model.predict(X), model.classes)


@dataclass
class SweepRow:
    K: int
    loss: float
    train_accuracy: float
    iterations: int
    weights: WeightVector


def sweep_k(train: Sequence[HumanDrivingSample], k_values: Sequence[int], cfgs: PipelineConfig = PipelineConfig(),
            exp: Experiment = Experiment.EXP3, fit_cfg: FitConfig = FitConfig()) -> List[SweepRow]:
    """Fit F0 for each K, warm-starting from the previous optimum with the new powers at zero."""
    k_values = [int(k) for k in k_values]
    if not k_values or any(b <= a for a, b in zip(k_values, k_values[1:])):
        raise ValueError("k_values must be non-empty and strictly ascending")
    exp = Experiment(exp)
    train = exp.select(train)
    base = build_base_cache(train, exp.mode(), cfgs)
    rows: List[SweepRow] = []
    prev: Optional[WeightVector] = None
    for K in k_values:
        cache = assemble(base, Variant.F0, K)
        init = prev.expand_k(K) if prev is not None else None
        result = fit(cache, replace(fit_cfg, init=init))
        report = evaluate_cache(cache, result.weights, exp)
        rows.append(SweepRow(K, result.loss, report.confusion.overall_accuracy, result.iterations, result.weights))
        prev = result.weights
    return rows


def unbalanced_study(synth_cfg: SynthConfig, cfgs: PipelineConfig, cf_multiplier: float, seed: int,
                     train_counts: Dict[str, int], test_counts: Dict[str, int],
                     fit_cfg: FitConfig = FitConfig()) -> Tuple[EvalReport, EvalReport]:
    """EXP3/F0 with car-following samples multiplied in both splits.

    Returns the (train, test) reports; with ``cf_multiplier == 1`` this is a plain
    EXP3/F0 run on a dataset of exactly the requested counts.
    """
    if cf_multiplier < 1:
        raise ValueError("cf_multiplier must be >= 1")
    train_counts = dict(train_counts, CF=int(round(train_counts.get("CF", 0) * cf_multiplier)))
    test_counts = dict(test_counts, CF=int(round(test_counts.get("CF", 0) * cf_multiplier)))
    mix = {b.value: train_counts.get(b.value, 0) + test_counts.get(b.value, 0) for b in Behavior}
    samples = synthesize_dataset(replace(synth_cfg, label_mix=mix))
    train, test = split(samples, train_counts, test_counts, seed)
    result = run_experiment(Experiment.EXP3, Variant.F0, train, test, cfgs, seed, fit_cfg)
    return result.train_report, result.test_report
