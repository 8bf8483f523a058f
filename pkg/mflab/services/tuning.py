"""
Regularization selection by held-out zero-one error.

Each candidate lambda is scored on repeated one-rating-per-user validation
splits of the training data; the smallest mean error wins and ties go to the
smaller lambda.
"""

import logging
from typing import Callable, List, NamedTuple, Sequence

import numpy as np

from mflab.models.rating_matrix import SparseRatingMatrix
from mflab.services.exceptions import ConfigurationError
from mflab.services.splits import weak_split

logger = logging.getLogger(__name__)

# Validation score of a candidate: (train, validation, lam, repetition) -> zero-one error
Scorer = Callable[[SparseRatingMatrix, SparseRatingMatrix, float, int], float]


def lambda_grid(start: int = 4, stop: int = 40, per_decade: int = 16) -> List[float]:
    """{10^(i / per_decade) : i = start..stop}, ascending."""
    return [10.0 ** (i / per_decade) for i in range(start, stop + 1)]


def penalty_grid(low: int = -4, high: int = 4) -> List[float]:
    """{10^low, .., 10^high}."""
    return [10.0 ** i for i in range(low, high + 1)]


class TuningResult(NamedTuple):
    """Selected lambda with the mean validation error of every candidate."""
    best: float
    scores: List[float]
    grid: List[float]


def tune_lambda(
    Y: SparseRatingMatrix,
    grid: Sequence[float],
    score: Scorer,
    repetitions: int = 3,
    seed: int = 0,
) -> TuningResult:
    """
    Pick the lambda with the smallest mean validation zero-one error.

    Equal errors resolve to the smaller lambda.
    A single-value grid is returned without training.

    Raises:
        ConfigurationError: If the grid is empty
    """
    grid = [float(value) for value in grid]
    if not grid:
        raise ConfigurationError("Lambda grid is empty")
    if len(grid) == 1:
        return TuningResult(best=grid[0], scores=[float("nan")], grid=grid)

    splits = [weak_split(Y, seed + repetition) for repetition in range(repetitions)]
    scores = []
    for lam in grid:
        errors = [
            score(part.train, part.test, lam, repetition)
            for repetition, part in enumerate(splits)
        ]
        scores.append(float(np.mean(errors)))
        logger.debug(f"lambda={lam:.4g}: mean zero-one error {scores[-1]:.4f}")

    # Ties go to the smaller lambda, whatever the grid order
    best_index = min(range(len(grid)), key=lambda index: (scores[index], grid[index]))

    logger.info(f"Selected lambda={grid[best_index]:.4g} (zero-one error {scores[best_index]:.4f})")
    return TuningResult(best=grid[best_index], scores=scores, grid=grid)
