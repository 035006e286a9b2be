"""Command line entry point.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import Dict, List, Optional

from ..core import Lane, situation_from_dict, validate_situation
from ..costs import CostConfig, Variant
from ..forest import ForestHyper, ForestModel
from ..learner import CandidateGenerationError, FitConfig, NumericalError, PipelineConfig
from ..planner import plan, plan_result_to_dict
from ..trajgen import LANE_CHANGE_ONLY, THREE_WAY, EmptyCandidateSet, PlanningMode
from .experiments import TRAIN_FIT, Experiment, evaluate_forest, evaluate_model, run_experiment, sweep_k, train_forest_on
from .io import DataError, load_model, load_samples, read_json, save_model, save_samples, write_json
from .synth import SynthConfig, SynthesisError, split, synthesize_dataset

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3
COUNT_ORDER = ("CF", "LLC", "RLC")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _counts(text: str) -> Dict[str, int]:
    parts = text.split(",")
    if len(parts) != 3:
        raise UsageError(f"expected three counts cf,llc,rlc, got {text!r}")
    try:
        return {name: int(v) for name, v in zip(COUNT_ORDER, parts)}
    except ValueError:
        raise UsageError(f"counts must be integers: {text!r}") from None


def _int_list(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(",")]
    except ValueError:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from None


def _pipeline(k: int) -> PipelineConfig:
    return PipelineConfig(cost=CostConfig(K=k))


def cmd_synth(args) -> int:
    cfg = SynthConfig.from_dict(read_json(args.config)) if args.config else SynthConfig()
    if args.seed is not None:
        cfg = SynthConfig.from_dict(dict(cfg.to_dict(), seed=args.seed))
    save_samples(synthesize_dataset(cfg), args.out)
    return EXIT_OK


def cmd_split(args) -> int:
    train_text, sep, test_text = args.counts.partition("/")
    if not sep:
        raise UsageError("--counts must look like cf,llc,rlc/cf,llc,rlc")
    train, test = split(load_samples(args.input), _counts(train_text), _counts(test_text), args.seed)
    save_samples(train, args.train)
    save_samples(test, args.test)
    return EXIT_OK


def _load_forest(path: Optional[str]) -> Optional[ForestModel]:
    if path is None:
        return None
    try:
        return ForestModel.from_dict(read_json(path))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, DataError):
            raise
        raise DataError(f"{path}: invalid forest file: {exc}") from exc


def cmd_train(args) -> int:
    exp, variant = Experiment(args.exp), Variant(args.variant)
    if variant not in exp.variants:
        raise UsageError(f"variant {variant.value} is not part of experiment {exp.value}")
    train = load_samples(args.train)
    test = load_samples(args.test) if args.test else []
    result = run_experiment(exp, variant, train, test, _pipeline(args.k), args.seed, TRAIN_FIT,
                            ForestHyper(n_trees=args.n_trees), _load_forest(args.forest))
    save_model(result.model, args.model_out, {"experiment": exp.value, "seed": args.seed,
                                              "train_loss": result.fit.loss})
    if args.report:
        report = {"train": result.train_report.to_dict(),
                  "test": result.test_report.to_dict() if result.test_report else None}
        write_json(report, args.report)
    return EXIT_OK


def cmd_eval(args) -> int:
    model = load_model(args.model)
    exp = Experiment(args.exp) if args.exp else Experiment(_model_meta(args.model).get("experiment", "3"))
    report = evaluate_model(model, load_samples(args.test), exp)
    write_json(report.to_dict(), args.report)
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write(report.confusion.to_csv())
    return EXIT_OK


def _model_meta(path) -> Dict:
    return read_json(path).get("meta", {})


def _mode(text: Optional[str], exp: str) -> PlanningMode:
    if text is None:
        return {"2": LANE_CHANGE_ONLY}.get(exp, THREE_WAY)
    named = {"three_way": THREE_WAY, "lane_change_only": LANE_CHANGE_ONLY,
             "left": PlanningMode.target(Lane.LEFT), "current": PlanningMode.target(Lane.CURRENT),
             "right": PlanningMode.target(Lane.RIGHT)}
    if text not in named:
        raise UsageError(f"unknown mode {text!r}; choose from {sorted(named)}")
    return named[text]


def cmd_plan(args) -> int:
    model = load_model(args.model)
    try:
        situation = situation_from_dict(read_json(args.situation))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, DataError):
            raise
        raise DataError(f"{args.situation}: invalid situation: {exc}") from exc
    problems = validate_situation(situation)
    if problems:
        raise DataError(f"{args.situation}: " + "; ".join(problems))
    result = plan(situation, model, _mode(args.mode, _model_meta(args.model).get("experiment", "3")))
    json.dump(plan_result_to_dict(result), sys.stdout)
    sys.stdout.write("\n")
    return EXIT_OK


def cmd_sweep_k(args) -> int:
    rows = sweep_k(load_samples(args.train), _int_list(args.k), _pipeline(1), Experiment(args.exp), FitConfig())
    table = [{"K": r.K, "loss": r.loss, "train_accuracy": r.train_accuracy, "iterations": r.iterations}
             for r in rows]
    if args.out:
        write_json({"rows": table}, args.out)
    else:
        json.dump({"rows": table}, sys.stdout)
        sys.stdout.write("\n")
    return EXIT_OK


def cmd_forest_train(args) -> int:
    pool = {2: "TWO_WAY", 3: "THREE_WAY"}[args.ways]
    train = load_samples(args.train)
    model = train_forest_on(train, pool, PipelineConfig(), ForestHyper(n_trees=args.n_trees), args.seed)
    write_json(model.to_dict(), args.model_out)
    if args.report:
        out = {"train": evaluate_forest(model, train).to_dict()}
        if args.test:
            out["test"] = evaluate_forest(model, load_samples(args.test)).to_dict()
        write_json(out, args.report)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hlplan", description="Learn trajectory cost functions from driving samples.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate synthetic samples from a known oracle")
    p.add_argument("--config", help="synth config JSON (defaults used when omitted)")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("split", help="stratified train/test split")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--counts", required=True, help="cf,llc,rlc/cf,llc,rlc for train/test")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="fit a cost model for one experiment and variant")
    p.add_argument("--exp", choices=["1", "2", "3"], required=True)
    p.add_argument("--variant", choices=[v.value for v in Variant], required=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--train", required=True)
    p.add_argument("--test", help="optional held-out samples to evaluate after training")
    p.add_argument("--model-out", required=True)
    p.add_argument("--report", help="write train/test evaluation JSON here")
    p.add_argument("--forest", help="pretrained forest JSON for f2/f3 (trained on --train otherwise)")
    p.add_argument("--n-trees", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a model on samples")
    p.add_argument("--model", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--exp", choices=["1", "2", "3"], help="defaults to the experiment the model was trained for")
    p.add_argument("--csv", help="also write the confusion matrix as CSV")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("plan", help="plan for one situation and print the result as JSON")
    p.add_argument("--model", required=True)
    p.add_argument("--situation", required=True)
    p.add_argument("--mode", help="three_way, lane_change_only, left, current or right")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("sweep-k", help="warm-started f0 fits over increasing K")
    p.add_argument("--k", required=True, help="ascending comma-separated K values")
    p.add_argument("--train", required=True)
    p.add_argument("--exp", choices=["1", "2", "3"], default="3")
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep_k)

    p = sub.add_parser("forest-train", help="train a two- or three-way lane decision forest")
    p.add_argument("--ways", type=int, choices=[2, 3], required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--test")
    p.add_argument("--model-out", required=True)
    p.add_argument("--report")
    p.add_argument("--n-trees", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_forest_train)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"hlplan: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"hlplan: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (DataError, CandidateGenerationError, EmptyCandidateSet, SynthesisError, ValueError) as exc:
        print(f"hlplan: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
