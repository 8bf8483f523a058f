"""
Hierarchical matrix factorization.

An R-level rating matrix is handled by R-1 bi-level MMMF stages. Stage q
sees ratings <= q as -1 and ratings > q as +1. Prediction scans the stages in
order: an unobserved entry takes rating q at the first stage that predicts -1
for it, and rating R if no stage does.
"""

import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from typing import Dict, List, Optional, Sequence

import numpy as np

from mflab.models.factors import FactorModel, HmfModel
from mflab.models.rating_matrix import SignMatrix, SparseRatingMatrix
from mflab.schemas.train import TrainConfig
from mflab.services.exceptions import ConfigurationError, StageOutOfRangeError
from mflab.services.metrics import zero_one_error
from mflab.services.mmmf import predict_bilevel, train_bmmmf
from mflab.services.tuning import lambda_grid, tune_lambda

logger = logging.getLogger(__name__)


def binarize_stage(Y: SparseRatingMatrix, q: int) -> SignMatrix:
    """
    Sign matrix of stage q: observed ratings <= q become -1, above q +1.

    Raises:
        StageOutOfRangeError: If q is outside 1..R-1
    """
    if not 1 <= q <= Y.rating_levels - 1:
        raise StageOutOfRangeError(q, Y.rating_levels)
    values = np.zeros(Y.shape, dtype=np.int8)
    values[Y.users, Y.items] = np.where(Y.ratings <= q, -1, 1)
    return SignMatrix(values)


def _stage_lambdas(Y: SparseRatingMatrix, cfg: TrainConfig, stage_lambdas: Optional[Sequence[float]]) -> List[float]:
    n_stages = Y.rating_levels - 1
    if stage_lambdas is None:
        return [cfg.lam] * n_stages
    lambdas = [float(value) for value in stage_lambdas]
    if len(lambdas) != n_stages:
        raise ConfigurationError(f"Expected {n_stages} stage lambdas for R={Y.rating_levels}, got {len(lambdas)}")
    return lambdas


def stage_config(cfg: TrainConfig, q: int, lam: float) -> TrainConfig:
    """Per-stage settings; stage q trains with seed cfg.seed + q."""
    return cfg.model_copy(update={"seed": cfg.seed + q, "lam": lam})


def _train_stage(Y: SparseRatingMatrix, q: int, cfg: TrainConfig) -> FactorModel:
    logger.info(f"HMF stage {q}/{Y.rating_levels - 1}: lam={cfg.lam:.4g}")
    return train_bmmmf(binarize_stage(Y, q), cfg)


def train_hmf(
    Y: SparseRatingMatrix,
    cfg: TrainConfig,
    stage_lambdas: Optional[Sequence[float]] = None,
    theta_cut: float = 0.0,
) -> HmfModel:
    """
    Train the R-1 stages one after another.

    Args:
        Y: Ordinal training ratings
        cfg: Shared solver settings (latent_dim, iterations, base seed)
        stage_lambdas: One lambda per stage; cfg.lam for every stage when omitted
        theta_cut: Sign threshold used at prediction time

    Raises:
        ConfigurationError: If stage_lambdas has the wrong length
    """
    lambdas = _stage_lambdas(Y, cfg, stage_lambdas)
    stages = [
        _train_stage(Y, q, stage_config(cfg, q, lambdas[q - 1]))
        for q in range(1, Y.rating_levels)
    ]
    return HmfModel(rating_levels=Y.rating_levels, stages=tuple(stages), theta_cut=theta_cut)


def train_hmf_parallel(
    Y: SparseRatingMatrix,
    cfg: TrainConfig,
    stage_lambdas: Optional[Sequence[float]] = None,
    theta_cut: float = 0.0,
    workers: int = 1,
) -> HmfModel:
    """
    Train the stages concurrently; the result equals train_hmf for the same inputs.

    Raises:
        ConfigurationError: If workers < 1 or stage_lambdas has the wrong length
    """
    if workers < 1:
        raise ConfigurationError(f"workers must be at least 1, got {workers}")
    lambdas = _stage_lambdas(Y, cfg, stage_lambdas)
    n_stages = Y.rating_levels - 1
    slots: Dict[int, FactorModel] = {}

    logger.info(f"Training {n_stages} HMF stages with {min(workers, n_stages)} workers")
    with ThreadPoolExecutor(max_workers=workers) as executor:
        future_to_stage = {
            executor.submit(_train_stage, Y, q, stage_config(cfg, q, lambdas[q - 1])): q
            for q in range(1, n_stages + 1)
        }
        for future in as_completed(future_to_stage):
            q = future_to_stage[future]
            slots[q] = future.result()
            logger.debug(f"HMF stage {q} finished")

    stages = tuple(slots[q] for q in range(1, n_stages + 1))
    return HmfModel(rating_levels=Y.rating_levels, stages=stages, theta_cut=theta_cut)


def predict_hmf(model: HmfModel, source: Optional[SparseRatingMatrix] = None) -> np.ndarray:
    """
    Dense rating completion by stage priority.

    Scanning q = 1..R-1, every entry not yet assigned takes q where stage q
    predicts -1 (U^q_i V^q_j < theta_cut). Entries left over take R. Observed
    entries of `source`, when given, are copied through unchanged.
    """
    completed = np.zeros(model.stages[0].shape, dtype=np.int64)
    for q, stage in enumerate(model.stages, start=1):
        negative = stage.predict_real() < model.theta_cut
        completed[(completed == 0) & negative] = q
    completed[completed == 0] = model.rating_levels

    if source is not None:
        completed[source.users, source.items] = source.ratings
    return completed


def select_stage_lambdas(
    Y: SparseRatingMatrix,
    cfg: TrainConfig,
    grid: Optional[Sequence[float]] = None,
    repetitions: int = 1,
    theta_cut: float = 0.0,
) -> List[float]:
    """
    Choose each stage's lambda by validation zero-one error on that stage's signs.

    The validation split holds out one rating per user (seeded from cfg.seed).
    """
    grid = list(grid) if grid is not None else lambda_grid()
    chosen = []
    for q in range(1, Y.rating_levels):

        def score(train: SparseRatingMatrix, validation: SparseRatingMatrix, lam: float, repetition: int) -> float:
            stage_cfg = stage_config(cfg, q, lam).model_copy(update={"seed": cfg.seed + q + 1000 * repetition})
            model = train_bmmmf(binarize_stage(train, q), stage_cfg)
            return zero_one_error(binarize_stage(validation, q), predict_bilevel(model, theta_cut))

        result = tune_lambda(Y, grid, score, repetitions=repetitions, seed=cfg.seed)
        logger.info(f"HMF stage {q}: selected lambda={result.best:.4g}")
        chosen.append(result.best)
    return chosen
