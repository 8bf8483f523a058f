"""
Binary margin losses, ordinal threshold losses and real-valued divergences.

All binary losses and derivatives accept scalars or numpy arrays of margins
z and return the same shape (a float for scalar input).
"""

from enum import Enum
from typing import Optional, Union

import numpy as np
from scipy.special import expit

from mflab.services.exceptions import DivergenceDomainError, NonDifferentiableLossError

ArrayLike = Union[float, np.ndarray]


class BinaryLossKind(str, Enum):
    """Margin losses h(z) for z = y * prediction."""
    ZERO_ONE = "zero_one"
    HINGE = "hinge"
    SMOOTH_HINGE = "smooth_hinge"
    MODIFIED_SQUARE = "modified_square"
    LOGISTIC = "logistic"


class DivergenceKind(str, Enum):
    """Real-valued losses between a target y and an estimate y_hat."""
    SQUARED = "squared"
    KULLBACK_LEIBLER = "kullback_leibler"
    ITAKURA_SAITO = "itakura_saito"
    BETA = "beta"


# Losses whose derivative is used by gradient-based training
DIFFERENTIABLE_LOSSES = frozenset({
    BinaryLossKind.SMOOTH_HINGE,
    BinaryLossKind.MODIFIED_SQUARE,
    BinaryLossKind.LOGISTIC,
})


def _result(values: np.ndarray, scalar: bool) -> ArrayLike:
    return float(values) if scalar else values


def binary_loss(kind: BinaryLossKind, z: ArrayLike) -> ArrayLike:
    """
    Evaluate a margin loss.

    Every loss is non-negative. Hinge, smooth hinge and modified square
    vanish for z >= 1; zero-one vanishes for z >= 0; logistic never vanishes.
    """
    scalar = np.ndim(z) == 0
    z = np.asarray(z, dtype=np.float64)

    if kind == BinaryLossKind.ZERO_ONE:
        out = (z < 0).astype(np.float64)
    elif kind == BinaryLossKind.HINGE:
        out = np.maximum(0.0, 1.0 - z)
    elif kind == BinaryLossKind.SMOOTH_HINGE:
        out = np.where(z <= 0, 0.5 - z, np.where(z < 1, 0.5 * (1.0 - z) ** 2, 0.0))
    elif kind == BinaryLossKind.MODIFIED_SQUARE:
        out = np.maximum(0.0, 1.0 - z) ** 2
    elif kind == BinaryLossKind.LOGISTIC:
        out = np.logaddexp(0.0, -z)
    else:
        raise ValueError(f"Unknown binary loss: {kind}")

    return _result(out, scalar)


def binary_loss_grad(kind: BinaryLossKind, z: ArrayLike) -> ArrayLike:
    """
    Derivative of a margin loss with respect to z.

    The hinge uses the subgradient -1 for z < 1 and 0 from z = 1 on.

    Raises:
        NonDifferentiableLossError: For the zero-one loss
    """
    scalar = np.ndim(z) == 0
    z = np.asarray(z, dtype=np.float64)

    if kind == BinaryLossKind.ZERO_ONE:
        raise NonDifferentiableLossError(kind.value)
    elif kind == BinaryLossKind.HINGE:
        out = np.where(z < 1, -1.0, 0.0)
    elif kind == BinaryLossKind.SMOOTH_HINGE:
        out = np.where(z <= 0, -1.0, np.where(z < 1, z - 1.0, 0.0))
    elif kind == BinaryLossKind.MODIFIED_SQUARE:
        out = -2.0 * np.maximum(0.0, 1.0 - z)
    elif kind == BinaryLossKind.LOGISTIC:
        out = -expit(-z)
    else:
        raise ValueError(f"Unknown binary loss: {kind}")

    return _result(out, scalar)


def divergence_loss(
    kind: DivergenceKind,
    y: float,
    y_hat: float,
    beta: Optional[float] = None,
) -> float:
    """
    Real-valued loss between a target and an estimate.

    SQUARED is (y - y_hat)^2. BETA follows the beta-divergence family, whose
    beta = 2 member is half the squared loss; beta = 1 and beta = 0 dispatch
    to the Kullback-Leibler and Itakura-Saito forms.

    Raises:
        DivergenceDomainError: For non-positive arguments where the loss
            needs logarithms or negative powers, or a missing/negative beta
    """
    if kind == DivergenceKind.SQUARED:
        return float((y - y_hat) ** 2)

    if kind == DivergenceKind.BETA:
        if beta is None or not np.isfinite(beta) or beta < 0:
            raise DivergenceDomainError(f"beta({beta})", y, y_hat)
        if beta == 1:
            return divergence_loss(DivergenceKind.KULLBACK_LEIBLER, y, y_hat)
        if beta == 0:
            return divergence_loss(DivergenceKind.ITAKURA_SAITO, y, y_hat)
        if beta < 2 and (y <= 0 or y_hat <= 0):
            raise DivergenceDomainError(f"beta({beta})", y, y_hat)
        if y < 0 or y_hat < 0:
            raise DivergenceDomainError(f"beta({beta})", y, y_hat)
        return float(
            y ** beta / (beta * (beta - 1))
            + y_hat ** beta / beta
            - y * y_hat ** (beta - 1) / (beta - 1)
        )

    if y <= 0 or y_hat <= 0:
        raise DivergenceDomainError(kind.value, y, y_hat)
    ratio = y / y_hat
    if kind == DivergenceKind.KULLBACK_LEIBLER:
        return float(y * np.log(ratio) - y + y_hat)
    if kind == DivergenceKind.ITAKURA_SAITO:
        return float(ratio - np.log(ratio) - 1.0)

    raise ValueError(f"Unknown divergence: {kind}")


def _threshold_terms(theta: np.ndarray):
    """Yield (k, theta_k) for defined thresholds; k is 1-based."""
    for k, value in enumerate(np.asarray(theta, dtype=np.float64), start=1):
        if not np.isnan(value):
            yield k, value


def immediate_threshold_loss(
    x: float,
    rating: int,
    theta: np.ndarray,
    base: BinaryLossKind = BinaryLossKind.SMOOTH_HINGE,
) -> float:
    """
    Loss against the two thresholds bounding the rating's region.

    `theta` holds theta_1..theta_{R-1}; the implicit outer sentinels and any
    NaN (undefined) thresholds contribute nothing.
    """
    total = 0.0
    for k, value in _threshold_terms(theta):
        if k == rating - 1:
            total += binary_loss(base, x - value)
        elif k == rating:
            total += binary_loss(base, value - x)
    return total


def all_threshold_loss(
    x: float,
    rating: int,
    theta: np.ndarray,
    base: BinaryLossKind = BinaryLossKind.SMOOTH_HINGE,
) -> float:
    """Loss summed over every threshold: x should exceed those below the rating and stay under the rest."""
    total = 0.0
    for k, value in _threshold_terms(theta):
        if k < rating:
            total += binary_loss(base, x - value)
        else:
            total += binary_loss(base, value - x)
    return total
