"""Command-line interface for factorization experiments."""

import argparse
import json
import sys
from typing import Any, Callable, Dict, List, Optional

import numpy as np
from pydantic import ValidationError

from mflab import __version__
from mflab.experiments.config_loader import ConfigLoader
from mflab.experiments.runner import ExperimentRunner, TrainedModel
from mflab.logging_config import setup_logging
from mflab.models.factors import FactorModel, HmfModel
from mflab.repositories.models import SavedModel, load_model, save_model
from mflab.repositories.multilabel import load_features_csv, save_labels_csv
from mflab.repositories.ratings import save_predictions_tsv, save_ratings_tsv
from mflab.schemas.experiment import Method
from mflab.services.exceptions import ConfigurationError, DatasetError, DimensionMismatchError, NumericalError
from mflab.services.grople import tune_feature_penalties
from mflab.services.hmf import select_stage_lambdas
from mflab.services.metrics import mlc_metrics
from mflab.services.synthetic import synthesize_ratings
from mflab.services.tuning import lambda_grid, penalty_grid

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3


class ArgumentParser(argparse.ArgumentParser):
    """argparse parser whose usage errors exit with the configuration-error code."""

    def __init__(self, *args, **kwargs):
        kwargs.setdefault("allow_abbrev", False)
        super().__init__(*args, **kwargs)

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"Error: {message}\n")


def _print_json(payload: Dict[str, Any]) -> None:
    print(json.dumps(payload, indent=2, sort_keys=True))


def _write_json(payload: Dict[str, Any], output: Optional[str]) -> None:
    if output:
        with open(output, "w", encoding="utf-8") as f:
            json.dump(payload, f, indent=2, sort_keys=True)
        print(f"Saved to: {output}")


def _saved_rating_levels(saved: SavedModel) -> Optional[int]:
    """R recorded by the model itself, when it has one."""
    if isinstance(saved.model, HmfModel):
        return saved.model.rating_levels
    if saved.thresholds is not None:
        return saved.thresholds.rating_levels
    if isinstance(saved.model, FactorModel) and saved.model.thresholds is not None:
        return saved.model.thresholds.shape[1] + 1
    return None


def _runner_for_saved(args: argparse.Namespace, overrides: List[str], partial: bool):
    """Load --model-path and build a runner whose method defaults to the saved one."""
    file_values = ConfigLoader.load_config(args.config)
    tokens = ConfigLoader.parse_overrides(overrides)
    model_path = tokens.get("model_path") or file_values.get("model_path")
    if not model_path:
        raise ConfigurationError("A saved model is required: pass --model-path")

    saved = load_model(model_path)
    defaults: Dict[str, Any] = {"method": saved.method}
    rating_levels = _saved_rating_levels(saved)
    if rating_levels is not None:
        defaults["rating_levels"] = rating_levels

    config = ConfigLoader.resolve(args.config, overrides, defaults=defaults, partial=partial)
    trained = TrainedModel(Method(saved.method), saved.model, saved.thresholds)
    return ExperimentRunner(config), trained


def cmd_run(args: argparse.Namespace, overrides: List[str]) -> int:
    config = ConfigLoader.resolve(args.config, overrides)
    runner = ExperimentRunner(config)
    report = runner.run()
    output_file = runner.save_report(report)

    print("=" * 60)
    print(f"{report.method}: {len(report.runs)} runs over seeds {config.seeds}")
    print("=" * 60)
    for name, item in report.summary.items():
        print(f"  {name}: {item.mean:.4f} +/- {item.std:.4f} (n={item.n})")
    print(f"Total time: {report.total_seconds:.2f}s")
    print(f"Report saved to: {output_file}")
    return EXIT_OK


def cmd_train(args: argparse.Namespace, overrides: List[str]) -> int:
    config = ConfigLoader.resolve(args.config, overrides)
    if not config.model_path:
        raise ConfigurationError("train needs --model-path to save the model")
    trained = ExperimentRunner(config).train_full()
    save_model(config.model_path, config.method.value, trained.model, trained.thresholds)
    print(f"Model saved to: {config.model_path}")
    if trained.details:
        _print_json(trained.details)
    return EXIT_OK


def cmd_predict(args: argparse.Namespace, overrides: List[str]) -> int:
    runner, trained = _runner_for_saved(args, overrides, partial=True)
    config = runner.config
    if not config.output:
        raise ConfigurationError("predict needs --output")

    if config.is_collaborative:
        source = runner.load_ratings() if config.ratings_path else None
        predictions = runner.predict_collaborative(trained, source)
        save_predictions_tsv(predictions, config.output)
    else:
        if not config.features_path:
            raise ConfigurationError("predict needs --features-path for multi-label models")
        predictions = runner.predict_multilabel(trained, load_features_csv(config.features_path))
        save_labels_csv(predictions, config.output)
    print(f"Predictions saved to: {config.output}")
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace, overrides: List[str]) -> int:
    runner, trained = _runner_for_saved(args, overrides, partial=False)
    config = runner.config

    if config.is_collaborative:
        truth = runner.load_ratings()
        predictions = runner.predict_collaborative(trained)
        if truth.n_users > predictions.shape[0] or truth.n_items > predictions.shape[1]:
            raise DimensionMismatchError(f"ids within the model's {predictions.shape}", f"{truth.shape}")
        metrics = runner.evaluate_collaborative(trained, predictions, truth)
    else:
        dataset = runner.load_multilabel()
        metrics = mlc_metrics(dataset.Y, runner.predict_multilabel(trained, dataset.X)).model_dump()

    payload = {"method": config.method.value, "metrics": metrics}
    _print_json(payload)
    _write_json(payload, config.output)
    return EXIT_OK


def cmd_tune(args: argparse.Namespace, overrides: List[str]) -> int:
    config = ConfigLoader.resolve(args.config, overrides)
    runner = ExperimentRunner(config)
    seed = config.seeds[0]

    if args.target == "penalties":
        if config.method != Method.GROPLE:
            raise ConfigurationError("--target penalties applies to grople only")
        result = tune_feature_penalties(
            runner.load_multilabel(),
            config.grople_config(seed),
            config.alpha_grid or penalty_grid(),
            config.beta_grid or penalty_grid(),
            workers=runner.workers,
        )
        payload = {
            "alpha": result.alpha,
            "beta": result.beta,
            "scores": [{"alpha": a, "beta": b, "hamming_loss": loss} for (a, b), loss in result.scores.items()],
        }
    elif not config.is_collaborative:
        raise ConfigurationError(f"--target {args.target} applies to collaborative methods only")
    elif args.target == "stages":
        ratings = runner.load_ratings()
        chosen = select_stage_lambdas(
            ratings,
            config.train_config(seed),
            config.lam_grid or lambda_grid(),
            repetitions=3,
            theta_cut=config.theta_cut,
        )
        payload = {"stage_lambdas": chosen}
    else:
        result = runner.tune_lambda(runner.load_ratings(), seed, grid=config.lam_grid or lambda_grid())
        payload = {"lam": result.best, "grid": result.grid, "scores": result.scores}

    _print_json(payload)
    _write_json(payload, config.output)
    return EXIT_OK


def cmd_synthesize(args: argparse.Namespace, overrides: List[str]) -> int:
    if overrides:
        raise ConfigurationError(f"Unexpected arguments: {' '.join(overrides)}")
    result = synthesize_ratings(
        args.n_users,
        args.n_items,
        args.latent_dim,
        args.rating_levels,
        seed=args.seed,
        max_rounds=args.max_rounds,
    )
    save_ratings_tsv(result.ratings, args.output)

    counts = np.bincount(result.ratings.ratings, minlength=args.rating_levels + 1)[1:]
    print(f"Wrote {len(result.ratings)} ratings ({args.n_users}x{args.n_items}, d={args.latent_dim}) to {args.output}")
    print(f"Stabilized: {result.stabilized} after {result.rounds} rounds")
    print("Rating counts: " + ", ".join(f"{r}: {int(c)}" for r, c in enumerate(counts, start=1)))
    return EXIT_OK


COMMANDS: Dict[str, Callable[[argparse.Namespace, List[str]], int]] = {
    "run": cmd_run,
    "train": cmd_train,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "tune": cmd_tune,
    "synthesize": cmd_synthesize,
}


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(
        prog="mf",
        description="Maximum-margin and hierarchical matrix factorization experiments",
        epilog="Any experiment setting can be given as --key value; flags override the config file.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING or ERROR (default: settings)")

    subparsers = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help_text: str) -> ArgumentParser:
        sub = subparsers.add_parser(name, help=help_text)
        sub.add_argument("-c", "--config", help="key = value or YAML experiment file")
        return sub

    add("run", help_text="Split, train, predict and evaluate for every seed; writes a JSON report")
    add("train", help_text="Train on all data and save the model (--model-path)")
    add("predict", help_text="Predict with a saved model (--model-path, --output)")
    add("evaluate", help_text="Score a saved model against a dataset")

    tune = add("tune", help_text="Select regularization by validation error")
    tune.add_argument(
        "--target",
        choices=["lambda", "stages", "penalties"],
        default="lambda",
        help="lambda: one lambda; stages: one lambda per HMF stage; penalties: GroPLE alpha and beta",
    )

    synth = subparsers.add_parser("synthesize", help="Write a synthetic low-rank rating matrix")
    synth.add_argument("--n-users", type=int, required=True)
    synth.add_argument("--n-items", type=int, required=True)
    synth.add_argument("--latent-dim", type=int, required=True)
    synth.add_argument("--rating-levels", type=int, required=True)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--max-rounds", type=int, default=100)
    synth.add_argument("-o", "--output", required=True, help="Destination TSV")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main CLI entry point."""
    parser = build_parser()
    args, overrides = parser.parse_known_args(argv)

    try:
        setup_logging(args.log_level)
        return COMMANDS[args.command](args, overrides)
    except (ConfigurationError, ValidationError, FileNotFoundError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except DatasetError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
