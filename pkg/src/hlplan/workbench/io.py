"""JSON Lines sample files and JSON model files."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict
from pathlib import Path
from typing import Dict, Iterable, List, Optional

import numpy as np

from ..core import Behavior, HumanDrivingSample, Trajectory, situation_from_dict, situation_to_dict, validate_sample
from ..costs import CostConfig, Variant, WeightVector
from ..forest import ForestModel
from ..metric import MetricConfig
from ..planner import PlannerModel
from ..trajgen import TessellationConfig

logger = logging.getLogger(__name__)

MODEL_FORMAT_VERSION = 1
SIGN_CONVENTION = "d measured from the current lane center, positive toward the left lane"


class DataError(ValueError):
    """Malformed or invalid input data."""


def sample_to_dict(sample: HumanDrivingSample) -> Dict:
    out = {"id": sample.id}
    out.update(situation_to_dict(sample.situation))
    out["gt"] = {"dt": sample.gt.dt, "points": sample.gt.points.tolist()}
    out["label"] = sample.label.value
    return out


def sample_from_dict(data: Dict) -> HumanDrivingSample:
    gt = data["gt"]
    points = np.asarray(gt["points"], dtype=float)
    if points.ndim != 2 or points.shape[1] != 6:
        raise ValueError("gt points must be rows of 6 numbers")
    return HumanDrivingSample(
        id=str(data["id"]),
        situation=situation_from_dict(data),
        gt=Trajectory(float(gt["dt"]), points),
        label=Behavior(data["label"]),
    )


def load_samples(path) -> List[HumanDrivingSample]:
    """Parse a sample file; invalid samples are dropped with a logged reason.

    Malformed lines (bad JSON, missing fields) raise :class:`DataError` naming the line.
    """
    samples = []
    dts = set()
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            sample = sample_from_dict(json.loads(line))
        except (ValueError, KeyError, TypeError) as exc:
            raise DataError(f"{path}:{lineno}: {exc.__class__.__name__}: {exc}") from exc
        problems = validate_sample(sample)
        if problems:
            logger.warning("%s:%d: rejected sample %s: %s", path, lineno, sample.id, "; ".join(problems))
            continue
        samples.append(sample)
        dts.add(sample.gt.dt)
    if len(dts) > 1:
        raise DataError(f"{path}: mixed gt sampling intervals {sorted(dts)}")
    return samples


def save_samples(samples: Iterable[HumanDrivingSample], path) -> None:
    with open(path, "w") as fh:
        for sample in samples:
            fh.write(json.dumps(sample_to_dict(sample)) + "\n")


def model_to_dict(model: PlannerModel, meta: Optional[Dict] = None) -> Dict:
    cost = model.cost_cfg
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "variant": model.variant.value,
        "K": model.K,
        "weights": [float(v) for v in model.weights.weights],
        "normalizers": list(cost.normalizers),
        "cost_config": {"lambda_s": cost.lambda_s, "virtual_distance": cost.virtual_distance,
                        "virtual_speed": cost.virtual_speed},
        "tessellation_config": asdict(model.tess_cfg),
        "metric_config": asdict(model.metric_cfg),
        "forest": model.forest.to_dict() if model.forest is not None else None,
        "sign_convention": SIGN_CONVENTION,
        "meta": dict(meta or {}),
    }


def model_from_dict(data: Dict) -> PlannerModel:
    if data.get("format_version") != MODEL_FORMAT_VERSION:
        raise DataError(f"unsupported model format_version {data.get('format_version')!r}")
    variant = Variant(data["variant"])
    K = int(data["K"])
    cost = CostConfig(K=K, normalizers=tuple(data["normalizers"]), **data["cost_config"])
    forest = ForestModel.from_dict(data["forest"]) if data.get("forest") else None
    return PlannerModel(variant, WeightVector(variant, K, np.array(data["weights"], dtype=float)), cost,
                        TessellationConfig(**data["tessellation_config"]), MetricConfig(**data["metric_config"]),
                        forest)


def write_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


def read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON: {exc}") from exc


def save_model(model: PlannerModel, path, meta: Optional[Dict] = None) -> None:
    write_json(model_to_dict(model, meta), path)


def load_model(path) -> PlannerModel:
    try:
        return model_from_dict(read_json(path))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, DataError):
            raise
        raise DataError(f"{path}: invalid model file: {exc}") from exc
