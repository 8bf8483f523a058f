"""
Experiment runner: split, train, predict and evaluate for every seed.
"""

import logging
import math
import time
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Dict, Iterator, List, NamedTuple, Optional, Union

import numpy as np

from mflab import __version__
from mflab.config import settings
from mflab.models.factors import ProximalThresholds
from mflab.models.multilabel import EmbeddingTree, GroupedLabelEmbedding, MultiLabelDataset
from mflab.models.rating_matrix import SparseRatingMatrix
from mflab.repositories.multilabel import load_multilabel_csv
from mflab.repositories.ratings import load_ratings_tsv
from mflab.schemas.experiment import ExperimentConfig, Method, SplitKind
from mflab.schemas.report import RunEntry, RunReport
from mflab.schemas.train import TrainConfig
from mflab.services.exceptions import ConfigurationError
from mflab.services.fold_in import fold_in_factor_model, fold_in_hmf_model, fold_in_proximal_model
from mflab.services.grople import predict_grople, train_grople, tune_feature_penalties
from mflab.services.hmf import binarize_stage, predict_hmf, select_stage_lambdas, train_hmf, train_hmf_parallel
from mflab.services.metrics import cf_metrics, mlc_metrics, zero_one_error
from mflab.services.mlc_hmf import build_tree, classify_batch
from mflab.services.mmmf import predict_bilevel, predict_ordinal, train_bmmmf, train_mmmf
from mflab.services.pmmmf import predict_pmmmf, train_pmmmf
from mflab.services.splits import RatingSplit, StrongSplit, kfold_indices, split
from mflab.services.tuning import TuningResult, tune_lambda

logger = logging.getLogger(__name__)


class TrainedModel(NamedTuple):
    """A fitted model with what is needed to predict from it."""
    method: Method
    model: Any
    thresholds: Optional[ProximalThresholds] = None
    details: Dict[str, Any] = {}


class PhaseTimer:
    """Accumulates wall-clock seconds per named phase."""

    def __init__(self):
        self.seconds: Dict[str, float] = {}

    @contextmanager
    def phase(self, name: str) -> Iterator[None]:
        start = time.perf_counter()
        try:
            yield
        finally:
            self.seconds[name] = self.seconds.get(name, 0.0) + time.perf_counter() - start


class ExperimentRunner:
    """
    Drive one experiment configuration end to end.

    Collaborative methods are split by the configured protocol (weak, strong,
    random holdout or k-fold); multi-label methods support random holdout and
    k-fold over instances.
    """

    def __init__(self, config: ExperimentConfig, workers: Optional[int] = None):
        self.config = config
        self.workers = workers or config.workers or settings.workers
        self._ratings: Optional[SparseRatingMatrix] = None
        self._dataset: Optional[MultiLabelDataset] = None

    # Data

    def load_ratings(self) -> SparseRatingMatrix:
        if self._ratings is None:
            self._ratings = load_ratings_tsv(
                self.config.ratings_path,
                rating_levels=self.config.rating_levels,
                sep=self.config.sep,
                eachmovie=self.config.eachmovie,
            )
        return self._ratings

    def load_multilabel(self) -> MultiLabelDataset:
        if self._dataset is None:
            self._dataset = load_multilabel_csv(self.config.features_path, self.config.labels_path)
        return self._dataset

    def bilevel_stage(self, rating_levels: int) -> int:
        """Ratings above this stage count as +1 for bmmmf; ceil(R/2) by default."""
        return self.config.bilevel_stage or math.ceil(rating_levels / 2)

    # Collaborative filtering

    def _validation_error(self, cfg: TrainConfig, train: SparseRatingMatrix, validation: SparseRatingMatrix) -> float:
        trained = self._fit_collaborative(train, cfg)
        if trained.method == Method.BMMMF:
            q = self.bilevel_stage(train.rating_levels)
            return zero_one_error(binarize_stage(validation, q), self.predict_collaborative(trained))
        return cf_metrics(validation, self.predict_collaborative(trained), self.config.nmae_divisor).zero_one

    def tune_lambda(
        self,
        train: SparseRatingMatrix,
        seed: int,
        grid: Optional[List[float]] = None,
        repetitions: int = 3,
    ) -> TuningResult:
        """Select lambda from `grid` (config.lam_grid by default) by validation zero-one error."""
        cfg = self.config.train_config(seed)

        def score(part: SparseRatingMatrix, validation: SparseRatingMatrix, lam: float, repetition: int) -> float:
            candidate = cfg.model_copy(update={"lam": lam, "seed": seed + 1000 * repetition})
            return self._validation_error(candidate, part, validation)

        grid = self.config.lam_grid if grid is None else grid
        return tune_lambda(train, grid, score, repetitions=repetitions, seed=seed)

    def _fit_collaborative(
        self,
        train: SparseRatingMatrix,
        cfg: TrainConfig,
        stage_lambdas: Optional[List[float]] = None,
    ) -> TrainedModel:
        method = self.config.method
        if method == Method.BMMMF:
            signs = binarize_stage(train, self.bilevel_stage(train.rating_levels))
            return TrainedModel(method, train_bmmmf(signs, cfg))
        if method == Method.MMMF:
            return TrainedModel(method, train_mmmf(train, cfg))
        if method == Method.HMF:
            return TrainedModel(method, train_hmf(train, cfg, stage_lambdas, self.config.theta_cut))
        if method == Method.PHMF:
            model = train_hmf_parallel(train, cfg, stage_lambdas, self.config.theta_cut, workers=self.workers)
            return TrainedModel(method, model)
        if method == Method.PMMMF:
            model, thresholds = train_pmmmf(train, cfg)
            return TrainedModel(method, model, thresholds)
        raise ConfigurationError(f"Method '{method.value}' is not a collaborative filtering method")

    def train_collaborative(self, train: SparseRatingMatrix, seed: int) -> TrainedModel:
        """Train the configured method, tuning lambda first when a grid is configured."""
        cfg = self.config.train_config(seed)
        stage_lambdas = self.config.stage_lambdas
        details: Dict[str, Any] = {}

        if self.config.lam_grid:
            if self.config.method in (Method.HMF, Method.PHMF) and stage_lambdas is None:
                stage_lambdas = select_stage_lambdas(train, cfg, self.config.lam_grid, repetitions=3, theta_cut=self.config.theta_cut)
            elif self.config.method not in (Method.HMF, Method.PHMF):
                cfg = cfg.model_copy(update={"lam": self.tune_lambda(train, seed).best})

        if self.config.method in (Method.HMF, Method.PHMF):
            details["stage_lambdas"] = list(stage_lambdas) if stage_lambdas is not None else [cfg.lam] * (train.rating_levels - 1)
        else:
            details["lam"] = cfg.lam

        trained = self._fit_collaborative(train, cfg, stage_lambdas)
        return trained._replace(details=details)

    def fold_in(self, trained: TrainedModel, tweak: SparseRatingMatrix, users: np.ndarray, seed: int) -> TrainedModel:
        """Refit the rows of novel users from their tweak ratings with item factors frozen."""
        cfg = self.config.train_config(seed).model_copy(update={"lam": trained.details.get("lam", self.config.lam)})
        method = trained.method
        if method == Method.BMMMF:
            signs = binarize_stage(tweak, self.bilevel_stage(tweak.rating_levels))
            model = fold_in_factor_model(trained.model, tweak, users, cfg, signs=signs)
            return trained._replace(model=model)
        if method == Method.MMMF:
            return trained._replace(model=fold_in_factor_model(trained.model, tweak, users, cfg))
        if method in (Method.HMF, Method.PHMF):
            model = fold_in_hmf_model(trained.model, tweak, users, cfg, trained.details.get("stage_lambdas"))
            return trained._replace(model=model)
        model, thresholds = fold_in_proximal_model(trained.model, trained.thresholds, tweak, users, cfg)
        return trained._replace(model=model, thresholds=thresholds)

    def predict_collaborative(self, trained: TrainedModel, source: Optional[SparseRatingMatrix] = None) -> np.ndarray:
        """Dense completion; bmmmf yields +1/-1, the others ratings 1..R."""
        method = trained.method
        if method == Method.BMMMF:
            signs = None
            if source is not None:
                signs = binarize_stage(source, self.bilevel_stage(source.rating_levels))
            return predict_bilevel(trained.model, self.config.theta_cut, signs)
        if method == Method.MMMF:
            return predict_ordinal(trained.model, source)
        if method in (Method.HMF, Method.PHMF):
            return predict_hmf(trained.model, source)
        return predict_pmmmf(trained.model, trained.thresholds, source)

    def evaluate_collaborative(self, trained: TrainedModel, predictions: np.ndarray, test: SparseRatingMatrix) -> Dict[str, float]:
        if trained.method == Method.BMMMF:
            truth = binarize_stage(test, self.bilevel_stage(test.rating_levels))
            return {"zero_one": zero_one_error(truth, predictions)}
        scores = cf_metrics(test, predictions, self.config.nmae_divisor)
        return scores.model_dump(exclude={"nmae_divisor", "n_entries"})

    def _collaborative_entry(
        self,
        seed: int,
        part: Union[RatingSplit, StrongSplit],
        timer: PhaseTimer,
        fold: Optional[int] = None,
    ) -> RunEntry:
        train = part.base_train if isinstance(part, StrongSplit) else part.train
        test = part.novel_heldout if isinstance(part, StrongSplit) else part.test

        with timer.phase("train"):
            trained = self.train_collaborative(train, seed)
        if isinstance(part, StrongSplit):
            with timer.phase("fold_in"):
                trained = self.fold_in(trained, part.novel_tweak, part.held_users, seed)
        with timer.phase("predict"):
            predictions = self.predict_collaborative(trained)
        with timer.phase("evaluate"):
            metrics = self.evaluate_collaborative(trained, predictions, test)

        details = dict(trained.details, n_train=len(train), n_test=len(test))
        logger.info(f"Seed {seed}{'' if fold is None else f' fold {fold}'}: {metrics}")
        return RunEntry(seed=seed, fold=fold, metrics=metrics, timings=dict(timer.seconds), details=details)

    def _collaborative_runs(self, seed: int) -> List[RunEntry]:
        timer = PhaseTimer()
        with timer.phase("load"):
            ratings = self.load_ratings()
        with timer.phase("split"):
            parts = split(ratings, self.config.split_spec(seed))

        if isinstance(parts, list):
            entries = []
            for fold, part in enumerate(parts):
                fold_timer = PhaseTimer()
                fold_timer.seconds.update(timer.seconds)
                entries.append(self._collaborative_entry(seed, part, fold_timer, fold))
            return entries
        return [self._collaborative_entry(seed, parts, timer)]

    # Multi-label classification

    def train_multilabel(self, dataset: MultiLabelDataset, seed: int) -> TrainedModel:
        method = self.config.method
        if method == Method.MLC_HMF:
            tree = build_tree(dataset, self.config.mlc_config(seed), workers=self.workers)
            retained = int(sum(node.retained.size for node in tree.nodes))
            details = {"nodes": len(tree.nodes), "depth": tree.depth(), "retained": retained}
            return TrainedModel(method, tree, details=details)

        if method == Method.GROPLE:
            cfg = self.config.grople_config(seed)
            details: Dict[str, Any] = {}
            if self.config.alpha_grid or self.config.beta_grid:
                selected = tune_feature_penalties(
                    dataset,
                    cfg,
                    self.config.alpha_grid or [cfg.alpha],
                    self.config.beta_grid or [cfg.beta],
                    workers=self.workers,
                )
                cfg = cfg.model_copy(update={"alpha": selected.alpha, "beta": selected.beta})
            model = train_grople(dataset, cfg, workers=self.workers)
            details.update(
                alpha=cfg.alpha,
                beta=cfg.beta,
                n_groups=model.grouping.n_groups,
                z_zero_fraction=float(np.mean(model.Z == 0)),
            )
            return TrainedModel(method, model, details=details)

        raise ConfigurationError(f"Method '{method.value}' is not a multi-label method")

    def predict_multilabel(self, trained: TrainedModel, X: np.ndarray) -> np.ndarray:
        if isinstance(trained.model, EmbeddingTree):
            return classify_batch(trained.model, X, K=self.config.neighbors)
        if isinstance(trained.model, GroupedLabelEmbedding):
            return predict_grople(trained.model, X)
        raise ConfigurationError(f"Cannot predict labels with a {type(trained.model).__name__}")

    def _instance_folds(self, n_instances: int, seed: int) -> List[np.ndarray]:
        """Test-instance index sets for the configured protocol."""
        if self.config.split == SplitKind.KFOLD:
            return kfold_indices(n_instances, self.config.folds, seed)
        if self.config.split == SplitKind.RANDOM_HOLDOUT:
            rng = np.random.default_rng(seed)
            n_test = min(max(int(round(self.config.test_fraction * n_instances)), 1), n_instances - 1)
            return [np.sort(rng.permutation(n_instances)[:n_test])]
        raise ConfigurationError(
            f"Split '{self.config.split.value}' applies to rating matrices only; use random_holdout or kfold"
        )

    def _multilabel_runs(self, seed: int) -> List[RunEntry]:
        base = PhaseTimer()
        with base.phase("load"):
            dataset = self.load_multilabel()
        with base.phase("split"):
            folds = self._instance_folds(dataset.n_instances, seed)

        entries = []
        for fold, test in enumerate(folds):
            timer = PhaseTimer()
            timer.seconds.update(base.seconds)
            mask = np.zeros(dataset.n_instances, dtype=bool)
            mask[test] = True
            train_part, test_part = dataset.take(np.flatnonzero(~mask)), dataset.take(test)

            with timer.phase("train"):
                trained = self.train_multilabel(train_part, seed)
            with timer.phase("predict"):
                predictions = self.predict_multilabel(trained, test_part.X)
            with timer.phase("evaluate"):
                metrics = mlc_metrics(test_part.Y, predictions).model_dump()

            logger.info(f"Seed {seed} fold {fold}: {metrics}")
            entries.append(RunEntry(
                seed=seed,
                fold=fold if len(folds) > 1 else None,
                metrics=metrics,
                timings=dict(timer.seconds),
                details=dict(trained.details, n_train=train_part.n_instances, n_test=test_part.n_instances),
            ))
        return entries

    # Whole runs

    def train_full(self, seed: Optional[int] = None) -> TrainedModel:
        """Train on all available data (for `mf train`)."""
        seed = self.config.seeds[0] if seed is None else seed
        if self.config.is_collaborative:
            return self.train_collaborative(self.load_ratings(), seed)
        return self.train_multilabel(self.load_multilabel(), seed)

    def run(self) -> RunReport:
        """Execute every seed and assemble the report."""
        start = time.perf_counter()
        config = self.config.model_dump(mode="json")
        logger.info(f"Running {self.config.method.value} for seeds {self.config.seeds}")

        runs: List[RunEntry] = []
        for seed in self.config.seeds:
            if self.config.is_collaborative:
                runs.extend(self._collaborative_runs(seed))
            else:
                runs.extend(self._multilabel_runs(seed))

        return RunReport(
            version=__version__,
            method=self.config.method.value,
            config=config,
            config_hash=RunReport.hash_config(config),
            runs=runs,
            summary=RunReport.summarize(runs),
            total_seconds=time.perf_counter() - start,
        )

    def save_report(self, report: RunReport, output_path: Optional[str] = None) -> Path:
        """
        Write the report as JSON.

        Defaults to config.output, then `<reports_dir>/<method>-<hash prefix>.json`.
        """
        output_path = output_path or self.config.output
        if output_path is None:
            output_path = Path(settings.reports_dir) / f"{report.method}-{report.config_hash[:12]}.json"

        output_file = Path(output_path)
        output_file.parent.mkdir(parents=True, exist_ok=True)
        with open(output_file, "w", encoding="utf-8") as f:
            f.write(report.model_dump_json(indent=2))

        logger.info(f"Report saved to: {output_file}")
        return output_file
