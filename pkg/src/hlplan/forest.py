"""Situation descriptors and random-forest lane decision models.

The forest is a plain CART ensemble (Gini impurity, bootstrap resampling,
sqrt(p) features tried per split) whose leaves keep class-count histograms.
Probabilities are Laplace-smoothed leaf frequencies averaged over trees, so
the lane incentive cost ``-log P`` is always finite.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numba
import numpy as np

from .core import SLOTS, Behavior, DrivingSituation, Lane
from .costs import CostConfig

logger = logging.getLogger(__name__)

N_FEATURES = 13
TWO_WAY = "TWO_WAY"
THREE_WAY = "THREE_WAY"
POOL_CLASSES = {TWO_WAY: ("LC", "CF"), THREE_WAY: ("LLC", "CF", "RLC")}


def encode_situation(situation: DrivingSituation, cfg: CostConfig = CostConfig()) -> np.ndarray:
    """13-dim descriptor: ego speed, then (|gap|, relative speed) for cf, cb, lf, lb, rf, rb.

    Absent vehicles on an existing lane become far virtual vehicles (leading ones
    pulling away, rear ones falling back); both entries of a missing lane are 0.
    """
    ego = situation.ego
    out = [ego.vs]
    for q in SLOTS:
        lane = {"c": Lane.CURRENT, "l": Lane.LEFT, "r": Lane.RIGHT}[q[0]]
        if not situation.lane_exists(lane):
            out += [0.0, 0.0]
        elif q in situation.env:
            st = situation.env[q]
            out += [abs(st.s - ego.s), st.vs - ego.vs]
        else:
            sign = 1.0 if q.endswith("f") else -1.0
            out += [cfg.virtual_distance, sign * cfg.virtual_speed]
    return np.array(out, dtype=float)


def pool_label(label, pool: str) -> str:
    """Map a behavior (or class name) into the class names of a decision pool."""
    name = label.value if isinstance(label, Behavior) else str(label)
    if pool == TWO_WAY and name in ("LLC", "RLC"):
        return "LC"
    if name not in POOL_CLASSES[pool]:
        raise ValueError(f"label {name!r} not representable in pool {pool}")
    return name


@dataclass
class Tree:
    """Flat binary tree; ``feature[i] == -1`` marks leaf ``i``."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray  # (n_nodes, n_classes), meaningful at leaves

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by each row of ``X``."""
        node = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        while True:
            feat = self.feature[node]
            internal = feat >= 0
            if not internal.any():
                return node
            go_left = X[rows, np.where(internal, feat, 0)] <= self.threshold[node]
            node = np.where(internal, np.where(go_left, self.left[node], self.right[node]), node)

    def to_records(self) -> List[Dict]:
        records = []
        for i in range(len(self.feature)):
            if self.feature[i] < 0:
                records.append({"counts": [int(c) for c in self.counts[i]]})
            else:
                records.append({"feature": int(self.feature[i]), "threshold": float(self.threshold[i]),
                                "left": int(self.left[i]), "right": int(self.right[i])})
        return records

    @classmethod
    def from_records(cls, records: Sequence[Dict], n_classes: int) -> "Tree":
        n = len(records)
        feature = np.full(n, -1, dtype=np.int64)
        threshold = np.zeros(n)
        left = np.full(n, -1, dtype=np.int64)
        right = np.full(n, -1, dtype=np.int64)
        counts = np.zeros((n, n_classes), dtype=np.int64)
        for i, rec in enumerate(records):
            if "counts" in rec:
                counts[i] = rec["counts"]
            else:
                feature[i] = rec["feature"]
                threshold[i] = rec["threshold"]
                left[i] = rec["left"]
                right[i] = rec["right"]
        return cls(feature, threshold, left, right, counts)


@dataclass
class ForestModel:
    """Trained forest.

    ``oob_proba`` holds out-of-bag class probabilities for the training rows
    (rows no tree left out fall back to the full forest). It exists only right
    after bootstrap training and is not serialized.
    """

    decision_pool: str
    trees: List[Tree]
    train_meta: Dict = field(default_factory=dict)
    oob_proba: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    @property
    def classes(self) -> Tuple[str, ...]:
        return POOL_CLASSES[self.decision_pool]

    @property
    def alpha(self) -> float:
        return float(self.train_meta.get("alpha", 0.01))

    def _tree_proba(self, tree: Tree, X: np.ndarray) -> np.ndarray:
        leaf_counts = tree.counts[tree.apply(X)].astype(float)
        n_classes = len(self.classes)
        return (leaf_counts + self.alpha) / (leaf_counts.sum(axis=1, keepdims=True) + self.alpha * n_classes)

    def predict_proba_batch(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        total = np.zeros((len(X), len(self.classes)))
        for tree in self.trees:
            total += self._tree_proba(tree, X)
        return total / len(self.trees)

    def predict(self, X: np.ndarray) -> List[str]:
        proba = self.predict_proba_batch(X)
        return [self.classes[i] for i in np.argmax(proba, axis=1)]

    def to_dict(self) -> Dict:
        return {
            "decision_pool": self.decision_pool,
            "classes": list(self.classes),
            "train_meta": dict(self.train_meta),
            "trees": [t.to_records() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "ForestModel":
        pool = data["decision_pool"]
        if pool not in POOL_CLASSES:
            raise ValueError(f"unknown decision pool {pool!r}")
        n_classes = len(POOL_CLASSES[pool])
        trees = [Tree.from_records(r, n_classes) for r in data["trees"]]
        return cls(pool, trees, dict(data.get("train_meta", {})))


@dataclass(frozen=True)
class ForestHyper:
    n_trees: int = 100
    min_leaf_grid: Tuple[int, ...] = (1, 2, 4, 8, 16, 32)
    cv_folds: int = 5
    alpha: float = 0.01
    bootstrap: bool = True
    max_features: Optional[int] = None  # default: floor(sqrt(n_features))


@numba.njit(cache=True)
def _grow_tree_kernel(X, y, n_classes, min_leaf, max_features, keys):
    """CART growth on rows of ``X`` (labels ``y``); ``keys[node]`` orders the features tried at a node.

    Returns flat node arrays and the node count. Children of a node are pushed
    right-then-left on a stack, so nodes are numbered depth-first, left first.
    """
    n, n_features = X.shape
    max_nodes = 2 * n
    feature = np.full(max_nodes, -1, dtype=np.int64)
    threshold = np.zeros(max_nodes)
    left = np.full(max_nodes, -1, dtype=np.int64)
    right = np.full(max_nodes, -1, dtype=np.int64)
    counts = np.zeros((max_nodes, n_classes), dtype=np.int64)
    idx = np.arange(n)
    stack = np.empty((max_nodes, 3), dtype=np.int64)  # node, start, end
    for i in range(n):
        counts[0, y[i]] += 1
    n_nodes = 1
    stack[0, 0], stack[0, 1], stack[0, 2] = 0, 0, n
    top = 1
    vals = np.empty(n)
    lab = np.empty(n, dtype=np.int64)
    cum = np.empty(n_classes, dtype=np.int64)
    while top > 0:
        top -= 1
        node, lo, hi = stack[top, 0], stack[top, 1], stack[top, 2]
        m = hi - lo
        nonzero = 0
        for c in range(n_classes):
            if counts[node, c] > 0:
                nonzero += 1
        if m < 2 * min_leaf or nonzero <= 1:
            continue
        best_score = -np.inf
        best_f = -1
        best_thr = 0.0
        tried = 0
        for f in np.argsort(keys[node]):
            if tried >= max_features and best_f >= 0:
                break
            for k in range(m):
                vals[k] = X[idx[lo + k], f]
            order = np.argsort(vals[:m], kind="mergesort")
            if vals[order[0]] == vals[order[m - 1]]:
                continue
            tried += 1
            for k in range(m):
                lab[k] = y[idx[lo + order[k]]]
            cum[:] = 0
            for k in range(m - 1):
                cum[lab[k]] += 1
                n_left = k + 1
                n_right = m - n_left
                if n_left < min_leaf or n_right < min_leaf:
                    continue
                a, b = vals[order[k]], vals[order[k + 1]]
                if not a < b:
                    continue
                sl = 0.0
                sr = 0.0
                for c in range(n_classes):
                    r = counts[node, c] - cum[c]
                    sl += cum[c] * cum[c]
                    sr += r * r
                # maximizing this minimizes the weighted Gini impurity of the children
                score = sl / n_left + sr / n_right
                if score > best_score:
                    best_score = score
                    best_f = f
                    thr = 0.5 * (a + b)
                    best_thr = thr if thr < b else a  # midpoint rounded up onto the right value
        if best_f < 0:
            continue
        # partition idx[lo:hi] on the chosen split
        split = lo
        for k in range(lo, hi):
            if X[idx[k], best_f] <= best_thr:
                idx[k], idx[split] = idx[split], idx[k]
                split += 1
        li, ri = n_nodes, n_nodes + 1
        n_nodes += 2
        for k in range(lo, split):
            counts[li, y[idx[k]]] += 1
        for k in range(split, hi):
            counts[ri, y[idx[k]]] += 1
        feature[node] = best_f
        threshold[node] = best_thr
        left[node] = li
        right[node] = ri
        stack[top, 0], stack[top, 1], stack[top, 2] = ri, split, hi
        stack[top + 1, 0], stack[top + 1, 1], stack[top + 1, 2] = li, lo, split
        top += 2
    return feature, threshold, left, right, counts, n_nodes


def _grow_tree(X: np.ndarray, y: np.ndarray, n_classes: int, min_leaf: int, max_features: int,
               rng: np.random.Generator) -> Tree:
    """Grow one CART tree on rows of ``X`` (rows may repeat)."""
    keys = rng.random((2 * len(X), X.shape[1]))
    feature, threshold, left, right, counts, n = _grow_tree_kernel(
        np.ascontiguousarray(X, dtype=float), np.asarray(y, dtype=np.int64), n_classes, min_leaf, max_features, keys)
    return Tree(feature[:n].copy(), threshold[:n].copy(), left[:n].copy(), right[:n].copy(), counts[:n].copy())


def _fit_forest(X: np.ndarray, y: np.ndarray, n_classes: int, min_leaf: int, hyper: ForestHyper,
                seed_seq: np.random.SeedSequence) -> Tuple[List[Tree], List[np.ndarray]]:
    """Trees and the training rows each one was grown on."""
    max_features = hyper.max_features or int(math.floor(math.sqrt(X.shape[1])))
    trees, row_sets = [], []
    for child in seed_seq.spawn(hyper.n_trees):
        rng = np.random.default_rng(child)
        rows = rng.integers(0, len(X), len(X)) if hyper.bootstrap else np.arange(len(X))
        trees.append(_grow_tree(X[rows], y[rows], n_classes, min_leaf, max_features, rng))
        row_sets.append(rows)
    return trees, row_sets


def _oob_proba(model: "ForestModel", X: np.ndarray, row_sets: List[np.ndarray]) -> np.ndarray:
    total = np.zeros((len(X), len(model.classes)))
    votes = np.zeros(len(X))
    for tree, rows in zip(model.trees, row_sets):
        out = np.ones(len(X), dtype=bool)
        out[rows] = False
        if out.any():
            total[out] += model._tree_proba(tree, X[out])
            votes[out] += 1
    proba = model.predict_proba_batch(X)
    seen = votes > 0
    proba[seen] = total[seen] / votes[seen, None]
    return proba


def _stratified_folds(y: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    fold = np.empty(len(y), dtype=np.int64)
    for c in np.unique(y):
        members = np.flatnonzero(y == c)
        members = members[rng.permutation(len(members))]
        fold[members] = np.arange(len(members)) % k
    return fold


def train_forest(samples: Sequence[Tuple[np.ndarray, object]], pool: str, hyper: ForestHyper = ForestHyper(),
                 seed: int = 0) -> ForestModel:
    """Train an rf2 (``TWO_WAY``) or rf3 (``THREE_WAY``) classifier.

    The minimal leaf size is picked from ``hyper.min_leaf_grid`` by stratified
    k-fold cross-validated accuracy; ties go to the larger leaf size.
    """
    if pool not in POOL_CLASSES:
        raise ValueError(f"unknown decision pool {pool!r}")
    classes = POOL_CLASSES[pool]
    X = np.array([np.asarray(desc, dtype=float) for desc, _ in samples])
    labels = [pool_label(lab, pool) for _, lab in samples]
    if len(set(labels)) <= 1:
        raise ValueError("degenerate single-class input")
    missing = [c for c in classes if c not in labels]
    if missing:
        raise ValueError(f"empty class: {', '.join(missing)}")
    y = np.array([classes.index(lab) for lab in labels])

    grid = sorted(set(int(v) for v in hyper.min_leaf_grid))
    if len(grid) > 1:
        if np.bincount(y, minlength=len(classes)).min() < hyper.cv_folds:
            raise ValueError(f"need at least {hyper.cv_folds} samples per class for cross-validation")
        folds = _stratified_folds(y, hyper.cv_folds, np.random.default_rng([seed, 0]))
        scores = {}
        for leaf in grid:
            correct = 0
            for k in range(hyper.cv_folds):
                tr, te = folds != k, folds == k
                trees, _ = _fit_forest(X[tr], y[tr], len(classes), leaf, hyper,
                                       np.random.SeedSequence([seed, 1, leaf, k]))
                model = ForestModel(pool, trees, {"alpha": hyper.alpha})
                correct += int(np.sum(np.argmax(model.predict_proba_batch(X[te]), axis=1) == y[te]))
            scores[leaf] = correct / len(y)
        best_leaf = max(grid, key=lambda leaf: (scores[leaf], leaf))
        logger.info("forest cv accuracy by min_samples_leaf: %s -> %d", scores, best_leaf)
    else:
        best_leaf = grid[0]
    trees, row_sets = _fit_forest(X, y, len(classes), best_leaf, hyper, np.random.SeedSequence([seed, 2]))
    meta = {"seed": int(seed), "n_trees": hyper.n_trees, "min_samples_leaf": best_leaf, "alpha": hyper.alpha,
            "bootstrap": hyper.bootstrap, "n_samples": len(y)}
    model = ForestModel(pool, trees, meta)
    if hyper.bootstrap:
        model.oob_proba = _oob_proba(model, X, row_sets)
    return model


def predict_proba(model: ForestModel, desc: np.ndarray) -> Dict[str, float]:
    p = model.predict_proba_batch(np.asarray(desc, dtype=float)[None])[0]
    return dict(zip(model.classes, (float(v) for v in p)))


def rf_incentive_cost(model: ForestModel, situation: DrivingSituation, decision, cfg: CostConfig = CostConfig()) -> float:
    """``-log P(decision | situation)`` with LLC/RLC mapped to LC for two-way models."""
    proba = predict_proba(model, encode_situation(situation, cfg))
    return float(-math.log(proba[pool_label(decision, model.decision_pool)]))


def lane_costs_from_proba(proba: Dict[str, float], pool: str) -> Dict[Lane, float]:
    return {lane: float(-math.log(proba[pool_label(Behavior.from_lane(lane), pool)])) for lane in Lane}


def lane_costs(model: ForestModel, situation: DrivingSituation, cfg: CostConfig = CostConfig()) -> Dict[Lane, float]:
    """Forest lane incentive cost per target lane (one forest evaluation per situation)."""
    return lane_costs_from_proba(predict_proba(model, encode_situation(situation, cfg)), model.decision_pool)
