"""Cost learning from human driving samples.

Each candidate trajectory ``j`` of sample ``i`` is selected with probability
``softmax(-f)`` where ``f = C_j . w``. The loss is the expected distance of the
selected candidate to the human trajectory, summed over samples; its gradient is

    dL/dw = sum_i sum_j P_j (E_i - d_j) C_j,   E_i = sum_k P_k d_k.

Cost vectors and distances do not depend on ``w`` and are computed once
(:func:`build_cache`); ``E_i`` is computed once per sample per evaluation.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .core import HumanDrivingSample, Lane
from .costs import CostConfig, Variant, WeightVector, base_costs, compute_normalizers, power_expand
from .forest import ForestModel, lane_costs, lane_costs_from_proba
from .metric import MetricConfig, distances_to, resample
from .trajgen import PlanningMode, TessellationConfig, build_candidate, tessellate

logger = logging.getLogger(__name__)

LANE_INDEX = {Lane.LEFT: 0, Lane.CURRENT: 1, Lane.RIGHT: 2}


class NumericalError(ArithmeticError):
    pass


class CandidateGenerationError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    """Everything needed to turn a situation into costed candidates."""

    tess: TessellationConfig = TessellationConfig()
    cost: CostConfig = CostConfig()
    metric: MetricConfig = MetricConfig()

    @property
    def dt(self) -> float:
        return self.metric.dt


ModeSpec = Union[PlanningMode, Callable[[HumanDrivingSample], PlanningMode]]


@dataclass
class BaseCache:
    """Weight-independent per-candidate data: raw base terms, distances, lanes, targets."""

    ids: List[str]
    labels: List[str]
    base: List[np.ndarray]  # (n_i, 10) raw base terms
    dist: List[np.ndarray]  # (n_i,)
    lanes: List[np.ndarray]  # (n_i,) lane index, see LANE_INDEX
    targets: List[List[Tuple[float, float, float]]]

    def __len__(self) -> int:
        return len(self.ids)

    def subset(self, idx: Sequence[int]) -> "BaseCache":
        return BaseCache([self.ids[i] for i in idx], [self.labels[i] for i in idx], [self.base[i] for i in idx],
                         [self.dist[i] for i in idx], [self.lanes[i] for i in idx], [self.targets[i] for i in idx])


@dataclass
class SampleCache:
    """Cost vectors and distances of every candidate of every sample.

    Stored padded: ``costs`` is ``(m, n_max, p)``, ``dist`` and ``mask`` are
    ``(m, n_max)``; padded slots have zero costs and are masked out of the softmax.
    """

    variant: Variant
    K: int
    normalizers: Tuple[float, ...]
    costs: np.ndarray
    dist: np.ndarray
    mask: np.ndarray
    base: BaseCache

    def __len__(self) -> int:
        return self.costs.shape[0]

    @property
    def n_params(self) -> int:
        return self.costs.shape[2]

    def sample_costs(self, i: int) -> np.ndarray:
        return self.costs[i, self.mask[i]]

    def sample_dist(self, i: int) -> np.ndarray:
        return self.dist[i, self.mask[i]]


def _resolve_mode(mode: ModeSpec, sample: HumanDrivingSample) -> PlanningMode:
    return mode(sample) if callable(mode) else mode


def build_base_cache(samples: Sequence[HumanDrivingSample], mode: ModeSpec, cfgs: PipelineConfig) -> BaseCache:
    ids, labels, base, dist, lanes, targets = [], [], [], [], [], []
    for sample in samples:
        try:
            tgts = tessellate(sample.situation, cfgs.tess, _resolve_mode(mode, sample))
        except ValueError as exc:
            raise CandidateGenerationError(f"sample {sample.id}: {exc}") from exc
        cands = [build_candidate(sample.situation, t, cfgs.dt, cfgs.tess.d_lane) for t in tgts]
        gt = resample(sample.gt, cfgs.dt)
        ids.append(sample.id)
        labels.append(sample.label.value)
        base.append(base_costs(cands, sample.situation, cfgs.cost))
        dist.append(distances_to(gt, cands, cfgs.metric))
        lanes.append(np.array([LANE_INDEX[c.target_lane] for c in cands], dtype=np.int64))
        targets.append(tgts)
    return BaseCache(ids, labels, base, dist, lanes, targets)


def forest_costs_for(base: BaseCache, samples: Sequence[HumanDrivingSample], forest: ForestModel,
                     cost_cfg: CostConfig, proba: Optional[np.ndarray] = None) -> List[np.ndarray]:
    """Per-candidate forest lane incentive cost for each sample.

    ``proba`` (one row of class probabilities per sample) replaces the forest's
    own predictions, e.g. with out-of-bag estimates for its training samples.
    """
    if proba is not None and len(proba) != len(samples):
        raise ValueError("need one probability row per sample")
    out = []
    for i, (sample, lanes) in enumerate(zip(samples, base.lanes)):
        if proba is None:
            per_lane = lane_costs(forest, sample.situation, cost_cfg)
        else:
            per_lane = lane_costs_from_proba(dict(zip(forest.classes, proba[i])), forest.decision_pool)
        table = np.array([per_lane[Lane.LEFT], per_lane[Lane.CURRENT], per_lane[Lane.RIGHT]])
        out.append(table[lanes])
    return out


def assemble(base: BaseCache, variant: Variant, K: int, normalizers: Optional[Sequence[float]] = None,
             rf: Optional[List[np.ndarray]] = None) -> SampleCache:
    """Power-expand cached base terms into a padded :class:`SampleCache`.

    ``normalizers`` default to the mean absolute base terms of this corpus.
    """
    if bool(variant.forest_ways) != (rf is not None):
        raise ValueError("forest costs are required exactly for f2/f3")
    if not len(base):
        raise ValueError("empty sample set")
    if normalizers is None:
        normalizers = compute_normalizers(base.base)
    normalizers = tuple(float(v) for v in normalizers)
    m = len(base)
    n_max = max(len(d) for d in base.dist)
    p = variant.length(K)
    costs = np.zeros((m, n_max, p))
    dist = np.zeros((m, n_max))
    mask = np.zeros((m, n_max), dtype=bool)
    for i in range(m):
        n = len(base.dist[i])
        costs[i, :n] = power_expand(base.base[i], variant, K, normalizers, None if rf is None else rf[i])
        dist[i, :n] = base.dist[i]
        mask[i, :n] = True
    if not np.all(np.isfinite(costs)):
        raise NumericalError("non-finite cost vector entries in cache")
    return SampleCache(variant, K, normalizers, costs, dist, mask, base)


def build_cache(samples: Sequence[HumanDrivingSample], mode: ModeSpec, variant: Variant, cfgs: PipelineConfig,
                forest: Optional[ForestModel] = None, normalizers: Optional[Sequence[float]] = None) -> SampleCache:
    """Generate, cost and measure every candidate of every sample.

    ``mode`` is a planning mode or a function of the sample (e.g. the sample's own
    target lane). Normalizers are computed from this corpus unless given.
    """
    if bool(variant.forest_ways) != (forest is not None):
        raise ValueError("a forest is required exactly for f2/f3")
    base = build_base_cache(samples, mode, cfgs)
    rf = forest_costs_for(base, samples, forest, cfgs.cost) if forest is not None else None
    return assemble(base, variant, cfgs.cost.K, normalizers, rf)


def selection_probabilities(costs: Sequence[float]) -> np.ndarray:
    """Softmax of negated costs, shifted by the minimum cost for stability."""
    f = np.asarray(costs, dtype=float)
    if f.size == 0:
        raise ValueError("empty cost list")
    e = np.exp(-(f - f.min()))
    return e / e.sum()


def _check_weights(cache: SampleCache, w) -> np.ndarray:
    if isinstance(w, WeightVector):
        if w.variant is not cache.variant or w.K != cache.K:
            raise ValueError("weight vector variant/K does not match the cache")
        w = w.weights
    w = np.asarray(w, dtype=float)
    if w.shape != (cache.n_params,):
        raise ValueError(f"expected {cache.n_params} weights, got shape {w.shape}")
    return w


def _probabilities(cache: SampleCache, w: np.ndarray) -> np.ndarray:
    f = np.where(cache.mask, cache.costs @ w, np.inf)
    e = np.exp(-(f - f.min(axis=1, keepdims=True)))
    return e / e.sum(axis=1, keepdims=True)


def loss_and_gradient(cache: SampleCache, w) -> Tuple[float, np.ndarray]:
    w = _check_weights(cache, w)
    P = _probabilities(cache, w)
    expected = (P * cache.dist).sum(axis=1)  # E_i, reused for every candidate of sample i
    r = P * (expected[:, None] - cache.dist)
    per_sample = np.einsum("ij,ijk->ik", r, cache.costs)
    return float(expected.sum()), per_sample.sum(axis=0)


def loss(cache: SampleCache, w) -> float:
    w = _check_weights(cache, w)
    return float((_probabilities(cache, w) * cache.dist).sum(axis=1).sum())


def gradient(cache: SampleCache, w) -> np.ndarray:
    return loss_and_gradient(cache, w)[1]


DEFAULT_PENALTY_PATH = tuple(10.0 ** -e for e in range(9))
START_MODES = ("zeros", "nearest")


@dataclass(frozen=True)
class FitConfig:
    """L-BFGS settings.

    ``start="nearest"`` first fits the (convex) log-likelihood of each sample's
    closest candidate and starts the loss minimization from that fit.

    When starting from zeros, the loss is first minimized with a shrinking L2
    penalty ``0.5 * p * m * |u|^2`` on the preconditioned weights ``u`` for each
    ``p`` in ``penalty_path`` (``m`` = number of samples), every stage warm-starting
    the next; the last stage always minimizes the plain loss. Without the path,
    L-BFGS tends to inflate the weight scale early and park on a saturated
    plateau where the softmax is already hard and the gradient has vanished.
    """

    max_iterations: int = 500
    gradient_tolerance: float = 1e-6
    history_size: int = 10
    # stop once a step lowers the objective by less than this fraction of its size;
    # near float precision the gradient test alone can stall the line search
    function_tolerance: float = 1e-12
    init: Optional[WeightVector] = None  # warm start; overrides ``start``
    start: str = "zeros"  # or "nearest": begin from the nearest-candidate likelihood fit
    penalty_path: Tuple[float, ...] = DEFAULT_PENALTY_PATH
    precondition: bool = True

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not self.gradient_tolerance > 0:
            raise ValueError("gradient_tolerance must be positive")
        if self.function_tolerance < 0:
            raise ValueError("function_tolerance must be non-negative")
        if self.history_size < 1:
            raise ValueError("history_size must be >= 1")
        if any(not p > 0 for p in self.penalty_path):
            raise ValueError("penalties must be positive")
        if self.start not in START_MODES:
            raise ValueError(f"start must be one of {START_MODES}")


@dataclass
class FitResult:
    weights: WeightVector
    loss: float
    iterations: int
    initial_loss: float
    losses: List[float]  # plain-loss value after each accepted step of the last stage
    reason: str


def _two_loop(g: np.ndarray, memory: List[Tuple[np.ndarray, np.ndarray, float]]) -> np.ndarray:
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(memory):
        a = rho * s.dot(q)
        alphas.append(a)
        q -= a * y
    s, y, _ = memory[-1]
    q *= s.dot(y) / y.dot(y)
    for (s, y, rho), a in zip(memory, reversed(alphas)):
        b = rho * y.dot(q)
        q += (a - b) * s
    return -q


def minimize_lbfgs(fun: Callable[[np.ndarray], Tuple[float, np.ndarray]], x0: np.ndarray, cfg: FitConfig,
                   c1: float = 1e-4, shrink: float = 0.5, max_backtracks: int = 40):
    """Limited-memory BFGS with Armijo backtracking. Returns (x, f, iterations, losses, reason)."""
    x = np.array(x0, dtype=float)
    f, g = fun(x)
    if not (np.isfinite(f) and np.all(np.isfinite(g))):
        raise NumericalError(f"non-finite loss/gradient at initial weights {x.tolist()}")
    losses = [f]
    memory: List[Tuple[np.ndarray, np.ndarray, float]] = []
    it = 0
    reason = "max_iterations"
    while it < cfg.max_iterations:
        if np.max(np.abs(g)) <= cfg.gradient_tolerance:
            reason = "gradient_tolerance"
            break
        if memory:
            direction = _two_loop(g, memory)
            step = 1.0
        else:
            direction = -g
            step = 1.0 / np.max(np.abs(g))
        slope = g.dot(direction)
        if not slope < 0:
            memory.clear()
            direction, slope = -g, -g.dot(g)
            step = 1.0 / np.max(np.abs(g))
        accepted = None
        for _ in range(max_backtracks):
            x_new = x + step * direction
            f_new, g_new = fun(x_new)
            if np.isfinite(f_new) and f_new <= f + c1 * step * slope:
                accepted = (x_new, f_new, g_new)
                break
            step *= shrink
        if accepted is None:
            if memory:
                memory.clear()
                continue
            reason = "line_search_failed"
            break
        x_new, f_new, g_new = accepted
        if not np.all(np.isfinite(g_new)):
            raise NumericalError(f"non-finite gradient at iterate {x_new.tolist()}")
        s, y = x_new - x, g_new - g
        sy = s.dot(y)
        if sy > 1e-12 * np.sqrt(s.dot(s) * y.dot(y)):
            memory.append((s, y, 1.0 / sy))
            if len(memory) > cfg.history_size:
                memory.pop(0)
        stalled = f - f_new <= cfg.function_tolerance * max(abs(f), abs(f_new), 1.0)
        x, f, g = x_new, f_new, g_new
        losses.append(f)
        it += 1
        if stalled:
            reason = "function_tolerance"
            break
    return x, f, it, losses, reason


def _log_probabilities(cache: SampleCache, w: np.ndarray) -> np.ndarray:
    f = np.where(cache.mask, cache.costs @ w, np.inf)
    z = -(f - f.min(axis=1, keepdims=True))
    return np.where(cache.mask, z - np.log(np.exp(z).sum(axis=1, keepdims=True)), 0.0)


def nearest_candidate_nll(cache: SampleCache, w) -> Tuple[float, np.ndarray]:
    """Negative log-likelihood of selecting each sample's closest candidate(s).

    Ties in distance share the target mass equally. Convex in ``w``.
    """
    w = _check_weights(cache, w)
    dist = np.where(cache.mask, cache.dist, np.inf)
    target = (dist <= dist.min(axis=1, keepdims=True)).astype(float)
    target /= target.sum(axis=1, keepdims=True)
    logp = _log_probabilities(cache, w)
    value = -float((target * logp).sum())
    grad = np.einsum("ij,ijk->ik", target - np.exp(logp) * cache.mask, cache.costs).sum(axis=0)
    return value, grad


def column_scales(cache: SampleCache) -> np.ndarray:
    """Mean absolute value of each cost-vector entry over all candidates (floored)."""
    return np.maximum(np.abs(cache.costs[cache.mask]).mean(axis=0), 1e-8)


def _penalized(fun, scale: np.ndarray, lam: float):
    """``fun`` in preconditioned coordinates ``u = w * scale`` plus ``0.5 * lam * |u|^2``."""
    def objective(u):
        value, grad = fun(u / scale)
        return value + 0.5 * lam * u.dot(u), grad / scale + lam * u
    return objective


def _penalty_path(fun, u0: np.ndarray, scale: np.ndarray, cfg: FitConfig, m: int):
    u, total = u0, 0
    for p in cfg.penalty_path:
        u, _, it, _, _ = minimize_lbfgs(_penalized(fun, scale, p * m), u, cfg)
        total += it
    return u, total


def fit(cache: SampleCache, cfg: FitConfig = FitConfig()) -> FitResult:
    """Minimize the expected-distance loss over the cache's weight vector.

    The optimizer works on ``u = w * scale`` with ``scale`` the column scales of
    the cache (a diagonal change of variables; the loss is unchanged). The
    returned weights are the lowest-loss end point among the stages and the
    starting point, so the final loss never exceeds the initial one.
    """
    if not len(cache):
        raise ValueError("empty cache")
    scale = column_scales(cache) if cfg.precondition else np.ones(cache.n_params)
    iterations = 0
    if cfg.init is not None:
        w0, penalties = _check_weights(cache, cfg.init).copy(), ()
    else:
        w0, penalties = np.zeros(cache.n_params), cfg.penalty_path
    f0, g0 = loss_and_gradient(cache, w0)
    if not (np.isfinite(f0) and np.all(np.isfinite(g0))):
        raise NumericalError(f"non-finite loss/gradient at initial weights {w0.tolist()}")
    if np.max(np.abs(g0)) <= cfg.gradient_tolerance:
        return FitResult(WeightVector(cache.variant, cache.K, w0), f0, 0, f0, [f0], "gradient_tolerance")
    if cfg.init is None and cfg.start == "nearest":
        u, iterations = _penalty_path(lambda w: nearest_candidate_nll(cache, w), w0 * scale, scale, cfg, len(cache))
        w0, penalties = u / scale, ()
        f0 = loss(cache, w0)
        if not np.isfinite(f0):
            raise NumericalError(f"non-finite loss at pretrained weights {w0.tolist()}")

    u = w0 * scale
    best_w, best_f = w0, f0
    losses: List[float] = [f0]
    reason = ""
    for p in tuple(penalties) + (0.0,):
        objective = _penalized(lambda w: loss_and_gradient(cache, w), scale, p * len(cache))
        u, _, it, losses, reason = minimize_lbfgs(objective, u, cfg)
        iterations += it
        w = u / scale
        f = loss(cache, w)
        if f <= best_f:
            best_w, best_f = w, f
        logger.debug("fit stage penalty %.1e: loss %.6g after %d iterations (%s)", p, f, it, reason)
    logger.info("fit %s K=%d: loss %.6g -> %.6g in %d iterations (%s)",
                cache.variant.value, cache.K, f0, best_f, iterations, reason)
    return FitResult(WeightVector(cache.variant, cache.K, best_w), best_f, iterations, f0, losses, reason)
