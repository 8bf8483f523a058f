"""
Proximal maximum-margin matrix factorization.

For every user i and rating r the threshold theta*_{i,r} is the mean
prediction over the items user i rated r. The objective pulls each
prediction towards its own class threshold (squared proximity) and pushes it
to the correct side of every other defined threshold (margin loss):

    J = sum_e (x_e - theta*_{i,y_e})^2
        + sum_e sum_{r != y_e} h(T_er (x_e - theta*_{i,r}))
        + (lam / 2)(||U||^2 + ||V||^2)

with T_er = +1 when r < y_e and -1 otherwise. Thresholds are a function of
(U, V) and are refreshed at every evaluation; classes a user never used
contribute nothing.
"""

import logging
from typing import Optional, Tuple

import numpy as np

from mflab.models.factors import FactorModel, ProximalThresholds
from mflab.models.rating_matrix import SparseRatingMatrix
from mflab.schemas.train import TrainConfig
from mflab.services.exceptions import NoObservedEntriesError
from mflab.services.losses import BinaryLossKind, binary_loss, binary_loss_grad
from mflab.services.mmmf import check_factors, frobenius_penalty, entry_predictions, run_solver, scatter_gradient
from mflab.services.optimizer import ParameterPacker, uniform_init

logger = logging.getLogger(__name__)


def class_statistics(x: np.ndarray, Y: SparseRatingMatrix) -> Tuple[np.ndarray, np.ndarray]:
    """Per-(user, rating) prediction means (NaN when empty) and counts."""
    R = Y.rating_levels
    classes = Y.users * R + (Y.ratings.astype(np.int64) - 1)
    counts = np.bincount(classes, minlength=Y.n_users * R).reshape(Y.n_users, R)
    sums = np.bincount(classes, weights=x, minlength=Y.n_users * R).reshape(Y.n_users, R)
    means = np.full(sums.shape, np.nan)
    np.divide(sums, counts, out=means, where=counts > 0)
    return means, counts


def compute_thresholds(U: np.ndarray, V: np.ndarray, Y: SparseRatingMatrix) -> ProximalThresholds:
    """Closed-form thresholds theta*_{i,r}: class means of U_i V_j^T over items user i rated r."""
    check_factors(U, V, Y.shape)
    means, counts = class_statistics(entry_predictions(U, V, Y.users, Y.items), Y)
    return ProximalThresholds(values=means, counts=counts)


def pmmmf_objective_grad(
    U: np.ndarray,
    V: np.ndarray,
    Y: SparseRatingMatrix,
    lam: float,
    loss: BinaryLossKind = BinaryLossKind.SMOOTH_HINGE,
) -> Tuple[float, np.ndarray, np.ndarray]:
    """
    Proximal objective and its total gradients with thresholds recomputed from (U, V).

    The gradient includes the dependence of every threshold on the predictions
    of its class (the mean-correction term).

    Raises:
        DimensionMismatchError: If U, V and Y shapes disagree
    """
    check_factors(U, V, Y.shape)
    users, items = Y.users, Y.items
    ratings = Y.ratings.astype(np.int64)
    R = Y.rating_levels

    x = entry_predictions(U, V, users, items)
    means, counts = class_statistics(x, Y)
    defined = counts[users] > 0
    theta = np.where(defined, np.nan_to_num(means[users]), 0.0)

    D = x[:, None] - theta
    levels = np.arange(1, R + 1)
    own = levels[None, :] == ratings[:, None]
    separating = defined & ~own
    T = np.where(levels[None, :] < ratings[:, None], 1.0, -1.0)

    margins = T * D
    J = float(np.sum(D[own] ** 2)) + frobenius_penalty(U, V, lam)
    J += float(np.sum(binary_loss(loss, margins[separating])))

    A = np.zeros_like(D)
    A[own] = 2.0 * D[own]
    A[separating] = T[separating] * binary_loss_grad(loss, margins[separating])

    # dJ/dtheta*_{i,r} = -S[i, r]; each theta* moves by 1/n with every member of its class
    S = np.column_stack([
        np.bincount(users, weights=A[:, r], minlength=Y.n_users) for r in range(R)
    ])
    own_class = ratings - 1
    coefficients = A.sum(axis=1) - S[users, own_class] / counts[users, own_class]

    gU, gV = scatter_gradient(coefficients, users, items, U, V, lam)
    return J, gU, gV


def train_pmmmf(Y: SparseRatingMatrix, cfg: TrainConfig) -> Tuple[FactorModel, ProximalThresholds]:
    """
    Fit U, V under the proximal objective; thresholds are refreshed at every evaluation.

    Raises:
        NoObservedEntriesError: If Y has no observed entry
    """
    if len(Y) == 0:
        raise NoObservedEntriesError(Y.shape)

    n_users, n_items = Y.shape
    d = cfg.latent_dim
    rng = np.random.default_rng(cfg.seed)
    packer = ParameterPacker({"U": (n_users, d), "V": (n_items, d)})
    x0 = packer.pack(U=uniform_init(rng, (n_users, d), d), V=uniform_init(rng, (n_items, d), d))

    logger.info(
        f"Training PMMMF: shape={n_users}x{n_items}, observed={len(Y)}, R={Y.rating_levels}, "
        f"d={d}, lam={cfg.lam}, seed={cfg.seed}"
    )

    def fun_grad(flat: np.ndarray) -> Tuple[float, np.ndarray]:
        blocks = packer.unpack(flat)
        J, gU, gV = pmmmf_objective_grad(blocks["U"], blocks["V"], Y, cfg.lam, cfg.loss)
        return J, packer.pack(U=gU, V=gV)

    result = run_solver(fun_grad, x0, cfg, n_users + n_items, "PMMMF")
    blocks = packer.unpack(result.x)
    model = FactorModel(U=blocks["U"], V=blocks["V"])
    return model, compute_thresholds(model.U, model.V, Y)


def weighted_cuts(values: np.ndarray, counts: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Decision cuts of one user.

    Defined thresholds are sorted; between neighbours s_k < s_{k+1} with class
    sizes n_k, n_{k+1} the cut sits at s_k + n_k / (n_k + n_{k+1}) (s_{k+1} - s_k).

    Returns:
        (labels, cuts): the user's defined ratings ascending, and len(labels) - 1 cuts
    """
    defined = np.asarray(counts) > 0
    labels = np.flatnonzero(defined) + 1
    order = np.argsort(np.asarray(values)[defined], kind="stable")
    s = np.asarray(values, dtype=np.float64)[defined][order]
    n = np.asarray(counts, dtype=np.float64)[defined][order]
    cuts = s[:-1] + n[:-1] / (n[:-1] + n[1:]) * (s[1:] - s[:-1])
    return labels, cuts


def fallback_rating(thresholds: ProximalThresholds) -> int:
    """Rounded mean of all training ratings, for users without any."""
    totals = thresholds.counts.sum(axis=0)
    levels = np.arange(1, thresholds.rating_levels + 1)
    if totals.sum() == 0:
        return int(np.ceil(thresholds.rating_levels / 2))
    return int(np.clip(np.rint(float(totals @ levels) / totals.sum()), 1, thresholds.rating_levels))


def predict_pmmmf(
    model: FactorModel,
    thresholds: ProximalThresholds,
    source: Optional[SparseRatingMatrix] = None,
) -> np.ndarray:
    """
    Dense rating completion by weighted cuts.

    An entry takes the k-th defined rating of its user, where k - 1 is the
    number of cuts strictly below its prediction. Users with no training
    ratings receive the rounded global mean. Observed entries of `source`,
    when given, are copied through unchanged.
    """
    X = model.predict_real()
    completed = np.empty(X.shape, dtype=np.int64)
    fallback = None

    for i in range(X.shape[0]):
        labels, cuts = weighted_cuts(thresholds.values[i], thresholds.counts[i])
        if labels.size == 0:
            if fallback is None:
                fallback = fallback_rating(thresholds)
            completed[i] = fallback
            continue
        completed[i] = labels[np.searchsorted(cuts, X[i], side="left")]

    if fallback is not None:
        logger.debug(f"Users without training ratings predicted as {fallback}")
    if source is not None:
        completed[source.users, source.items] = source.ratings
    return completed
