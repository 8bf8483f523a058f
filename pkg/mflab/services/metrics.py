"""
Evaluation metrics for rating prediction and multi-label classification.
"""

import logging
from typing import Iterable, Tuple, Union

import numpy as np

from mflab.models.rating_matrix import SignMatrix, SparseRatingMatrix
from mflab.schemas.evaluation import NMAE_DIVISORS, CfEval, MlcEval
from mflab.services.exceptions import ConfigurationError, DimensionMismatchError, EmptyTruthError

logger = logging.getLogger(__name__)

Truth = Union[SparseRatingMatrix, Iterable[Tuple[int, int, float]]]


def resolve_nmae_divisor(value: Union[float, str]) -> float:
    """
    Turn a preset name or a number into an NMAE divisor.

    Raises:
        ConfigurationError: For an unknown preset or a non-positive value
    """
    if isinstance(value, str):
        key = value.strip().lower()
        if key in NMAE_DIVISORS:
            return NMAE_DIVISORS[key]
        try:
            value = float(key)
        except ValueError:
            raise ConfigurationError(
                f"Unknown NMAE divisor '{value}'; use one of {sorted(NMAE_DIVISORS)} or a number"
            ) from None
    if value <= 0:
        raise ConfigurationError(f"NMAE divisor must be positive, got {value}")
    return float(value)


def _truth_arrays(truth: Truth) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    if isinstance(truth, SparseRatingMatrix):
        return truth.users, truth.items, truth.ratings.astype(np.float64)
    rows = np.asarray(list(truth), dtype=np.float64).reshape(-1, 3)
    return rows[:, 0].astype(np.int64), rows[:, 1].astype(np.int64), rows[:, 2]


def cf_metrics(truth: Truth, predicted: np.ndarray, divisor: Union[float, str] = "movielens") -> CfEval:
    """
    Score dense predictions on the truth entries only.

    Args:
        truth: Held-out ratings, as a matrix or 0-based (user, item, rating) triplets
        predicted: Dense prediction matrix
        divisor: NMAE divisor or preset name

    Raises:
        EmptyTruthError: If there is nothing to score
    """
    users, items, y = _truth_arrays(truth)
    if y.size == 0:
        raise EmptyTruthError()
    divisor = resolve_nmae_divisor(divisor)

    y_hat = np.asarray(predicted, dtype=np.float64)[users, items]
    error = y - y_hat
    mae = float(np.mean(np.abs(error)))
    return CfEval(
        mae=mae,
        rmse=float(np.sqrt(np.mean(error ** 2))),
        fre=float(np.sqrt(np.sum(error ** 2) / np.sum(y ** 2))),
        nmae=mae / divisor,
        zero_one=float(np.mean(y_hat != y)),
        nmae_divisor=divisor,
        n_entries=int(y.size),
    )


def zero_one_error(truth: SignMatrix, predicted: np.ndarray) -> float:
    """
    Fraction of observed sign entries predicted wrongly.

    Raises:
        EmptyTruthError: If `truth` has no observed entry
    """
    observed = truth.observed
    if not observed.any():
        raise EmptyTruthError()
    return float(np.mean(np.asarray(predicted)[observed] != truth.values[observed]))


def _ratio(numerator: np.ndarray, denominator: np.ndarray, empty: float) -> np.ndarray:
    """numerator / denominator with `empty` wherever the denominator is 0."""
    numerator = np.asarray(numerator, dtype=np.float64)
    denominator = np.asarray(denominator, dtype=np.float64)
    out = np.full(np.broadcast(numerator, denominator).shape, empty, dtype=np.float64)
    np.divide(numerator, denominator, out=out, where=denominator != 0)
    return out


def mlc_metrics(Y_true: np.ndarray, Y_pred: np.ndarray) -> MlcEval:
    """
    The six multi-label scores for +1/-1 label matrices.

    Per-example accuracy counts 1 when neither side has a positive label.
    Every F1 with an empty denominator counts 0.

    Raises:
        DimensionMismatchError: If the shapes differ
    """
    Y_true = np.asarray(Y_true)
    Y_pred = np.asarray(Y_pred)
    if Y_true.shape != Y_pred.shape or Y_true.ndim != 2:
        raise DimensionMismatchError(f"prediction of shape {Y_true.shape}", f"{Y_pred.shape}")
    if Y_true.size == 0:
        raise EmptyTruthError()

    T = Y_true > 0
    P = Y_pred > 0
    tp = T & P
    union = T | P

    per_tp = tp.sum(axis=1)
    accuracy = _ratio(per_tp, union.sum(axis=1), empty=1.0)
    example_f1 = _ratio(2 * per_tp, T.sum(axis=1) + P.sum(axis=1), empty=0.0)

    label_tp = tp.sum(axis=0)
    label_fp = (P & ~T).sum(axis=0)
    label_fn = (T & ~P).sum(axis=0)
    macro_f1 = _ratio(2 * label_tp, 2 * label_tp + label_fp + label_fn, empty=0.0)
    micro_f1 = _ratio(
        2 * label_tp.sum(), 2 * label_tp.sum() + label_fp.sum() + label_fn.sum(), empty=0.0
    )

    return MlcEval(
        hamming_loss=float(np.mean(T != P)),
        accuracy=float(np.mean(accuracy)),
        subset_accuracy=float(np.mean(np.all(T == P, axis=1))),
        example_f1=float(np.mean(example_f1)),
        macro_f1=float(np.mean(macro_f1)),
        micro_f1=float(micro_f1),
    )
