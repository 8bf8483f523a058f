"""
Synthetic low-rank rating matrices.

Starting from a random user basis U and a random integer matrix Y, the item
factors and the user factors are refitted by least squares in turn while Y is
replaced by the rounded, clamped reconstruction [U V^T]. The loop ends when Y
no longer changes, which leaves an exact fixpoint Y = [U V^T].
"""

import logging
from typing import NamedTuple

import numpy as np
from scipy import linalg

from mflab.models.rating_matrix import SparseRatingMatrix
from mflab.services.exceptions import ConfigurationError, SingularGramError

logger = logging.getLogger(__name__)

MAX_CONDITION = 1e12
MAX_REDRAWS = 3


class SyntheticResult(NamedTuple):
    """Fully observed ratings with the factors that reproduce them."""
    ratings: SparseRatingMatrix
    U: np.ndarray
    V: np.ndarray
    rounds: int
    stabilized: bool


def round_and_clamp(X: np.ndarray, rating_levels: int) -> np.ndarray:
    """[X]: nearest integer, clamped to 1..R."""
    return np.clip(np.rint(X), 1, rating_levels).astype(np.int64)


def _least_squares(basis: np.ndarray, targets: np.ndarray, which: str) -> np.ndarray:
    """Coefficients C with basis @ C ~ targets, via the normal equations."""
    gram = basis.T @ basis
    condition = float(np.linalg.cond(gram))
    if not np.isfinite(condition) or condition > MAX_CONDITION:
        raise SingularGramError(which, condition)
    return linalg.solve(gram, basis.T @ targets, assume_a="pos")


def _alternate(
    n_users: int,
    n_items: int,
    d: int,
    rating_levels: int,
    rng: np.random.Generator,
    max_rounds: int,
) -> SyntheticResult:
    U = rng.normal(size=(n_users, d))
    Y = rng.integers(1, rating_levels + 1, size=(n_users, n_items))

    for round_ in range(1, max_rounds + 1):
        V = _least_squares(U, Y, "U^T U").T
        Y_next = round_and_clamp(U @ V.T, rating_levels)
        if np.array_equal(Y_next, Y):
            return SyntheticResult(SparseRatingMatrix.from_dense(Y_next, rating_levels), U, V, round_, True)
        logger.debug(f"Round {round_}: {int(np.count_nonzero(Y_next != Y))} entries changed")
        Y = Y_next
        if round_ < max_rounds:
            U = _least_squares(V, Y.T, "V^T V").T

    logger.warning(f"Synthetic ratings did not stabilize within {max_rounds} rounds")
    return SyntheticResult(SparseRatingMatrix.from_dense(Y_next, rating_levels), U, V, max_rounds, False)


def synthesize_ratings(
    n_users: int,
    n_items: int,
    d: int,
    rating_levels: int,
    seed: int = 0,
    max_rounds: int = 100,
) -> SyntheticResult:
    """
    Generate a fully observed N x M rating matrix of latent rank d.

    The returned ratings always equal [U V^T] for the returned factors; when
    `stabilized` is False the loop hit `max_rounds` first.

    Raises:
        ConfigurationError: If d exceeds min(N, M) or a size is not positive
        SingularGramError: If every random draw produced a singular Gram matrix
    """
    if min(n_users, n_items, d) < 1 or rating_levels < 2:
        raise ConfigurationError(
            f"Synthetic sizes must be positive and R >= 2 (N={n_users}, M={n_items}, d={d}, R={rating_levels})"
        )
    if d > min(n_users, n_items):
        raise ConfigurationError(f"Latent dimension d={d} exceeds min(N, M)={min(n_users, n_items)}")

    logger.info(f"Synthesizing {n_users}x{n_items} ratings: d={d}, R={rating_levels}, seed={seed}")
    streams = np.random.SeedSequence(seed).spawn(MAX_REDRAWS + 1)
    for attempt, stream in enumerate(streams):
        try:
            result = _alternate(n_users, n_items, d, rating_levels, np.random.default_rng(stream), max_rounds)
        except SingularGramError as e:
            if attempt == MAX_REDRAWS:
                raise
            logger.warning(f"{e}; redrawing (attempt {attempt + 1} of {MAX_REDRAWS})")
            continue
        logger.info(f"Synthetic ratings stabilized={result.stabilized} after {result.rounds} rounds")
        return result
