"""
Folding novel users into a trained model.

The item factors (and, for hierarchical models, every stage's item factors)
stay frozen; only a fresh user row (plus its thresholds for ordinal MMMF) is
optimized against the user's known ratings.
"""

import logging
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from mflab.models.factors import FactorModel, HmfModel, ProximalThresholds
from mflab.models.rating_matrix import SignMatrix, SparseRatingMatrix
from mflab.schemas.train import TrainConfig
from mflab.services.exceptions import ConfigurationError, EmptyRatingsError
from mflab.services.losses import binary_loss, binary_loss_grad
from mflab.services.mmmf import initial_thresholds
from mflab.services.optimizer import ParameterPacker, minimize
from mflab.services.pmmmf import class_statistics, pmmmf_objective_grad

logger = logging.getLogger(__name__)


class FoldIn(NamedTuple):
    """Fitted row of one novel user; `theta` is None for bi-level models."""
    u: np.ndarray
    theta: Optional[np.ndarray]


def _solve(fun_grad, x0: np.ndarray, cfg: TrainConfig) -> np.ndarray:
    result = minimize(
        fun_grad,
        x0,
        step_rule=cfg.step_rule,
        step_size=cfg.step_size,
        max_iters=cfg.max_iters,
        rel_tol=cfg.rel_tol,
        restart_every=cfg.restart_every or x0.size,
        log_every=max(cfg.max_iters, 1),
    )
    return result.x


def fold_in_user(
    model: FactorModel,
    items: Sequence[int],
    ratings: Sequence[int],
    cfg: TrainConfig,
    rating_levels: Optional[int] = None,
) -> FoldIn:
    """
    Fit a new user row against the user's ratings with V frozen.

    Bi-level models (no thresholds) expect +1/-1 ratings and minimize
    sum_j h(y_j u.V_j) + (lam / 2)||u||^2. Ordinal models also fit a threshold
    row under the all-threshold loss.

    Args:
        model: Trained model whose V is kept
        items: 0-based item indices of the user's ratings
        ratings: Ratings (or signs) for those items
        cfg: Solver settings; cfg.lam is the user-row regularization
        rating_levels: R for ordinal models; defaults to thresholds width + 1

    Raises:
        EmptyRatingsError: If the user has no rating
    """
    items = np.asarray(items, dtype=np.int64)
    y = np.asarray(ratings, dtype=np.float64)
    if items.size == 0:
        raise EmptyRatingsError()

    V = model.V[items]
    d = model.latent_dim
    lam = cfg.lam
    rng = np.random.default_rng(cfg.seed)
    u0 = rng.uniform(-0.5, 0.5, size=d) / np.sqrt(d)

    if model.thresholds is None:
        def fun_grad(u: np.ndarray) -> Tuple[float, np.ndarray]:
            z = y * (V @ u)
            J = float(np.sum(binary_loss(cfg.loss, z))) + 0.5 * lam * float(u @ u)
            return J, V.T @ (y * binary_loss_grad(cfg.loss, z)) + lam * u

        return FoldIn(u=_solve(fun_grad, u0, cfg), theta=None)

    R = rating_levels or model.thresholds.shape[1] + 1
    packer = ParameterPacker({"u": (d,), "theta": (R - 1,)})

    def fun_grad(flat: np.ndarray) -> Tuple[float, np.ndarray]:
        blocks = packer.unpack(flat)
        u, theta = blocks["u"], blocks["theta"]
        x = V @ u
        J = 0.5 * lam * float(u @ u)
        g_x = np.zeros_like(x)
        g_theta = np.zeros_like(theta)
        for r in range(1, R):
            T = np.where(r >= y, 1.0, -1.0)
            z = T * (theta[r - 1] - x)
            J += float(np.sum(binary_loss(cfg.loss, z)))
            slope = T * binary_loss_grad(cfg.loss, z)
            g_theta[r - 1] = slope.sum()
            g_x -= slope
        return J, packer.pack(u=V.T @ g_x + lam * u, theta=g_theta)

    x0 = packer.pack(u=u0, theta=initial_thresholds(1, R)[0])
    blocks = packer.unpack(_solve(fun_grad, x0, cfg))
    return FoldIn(u=blocks["u"].copy(), theta=blocks["theta"].copy())


def fold_in_hmf(
    model: HmfModel,
    items: Sequence[int],
    ratings: Sequence[int],
    cfg: TrainConfig,
    stage_lambdas: Optional[Sequence[float]] = None,
) -> List[np.ndarray]:
    """One bi-level fold-in per stage on the stage's signs; returns the stage rows in order."""
    ratings = np.asarray(ratings)
    n_stages = model.rating_levels - 1
    lambdas = list(stage_lambdas) if stage_lambdas is not None else [cfg.lam] * n_stages
    if len(lambdas) != n_stages:
        raise ConfigurationError(f"Expected {n_stages} stage lambdas, got {len(lambdas)}")

    rows = []
    for q, stage in enumerate(model.stages, start=1):
        signs = np.where(ratings <= q, -1.0, 1.0)
        stage_cfg = cfg.model_copy(update={"lam": lambdas[q - 1], "seed": cfg.seed + q})
        rows.append(fold_in_user(stage, items, signs, stage_cfg).u)
    return rows


def fold_in_proximal(
    model: FactorModel,
    items: Sequence[int],
    ratings: Sequence[int],
    rating_levels: int,
    cfg: TrainConfig,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Fit a new user row under the proximal objective with V frozen.

    Returns:
        (u, threshold row, class-count row)
    """
    items = np.asarray(items, dtype=np.int64)
    if items.size == 0:
        raise EmptyRatingsError()

    single = SparseRatingMatrix(
        n_users=1,
        n_items=model.V.shape[0],
        rating_levels=rating_levels,
        users=np.zeros(items.size, dtype=np.int64),
        items=items,
        ratings=np.asarray(ratings),
    )
    V = model.V
    d = model.latent_dim
    frozen_penalty = 0.5 * cfg.lam * float(np.sum(V * V))

    def fun_grad(u: np.ndarray) -> Tuple[float, np.ndarray]:
        J, gU, _ = pmmmf_objective_grad(u[None, :], V, single, cfg.lam, cfg.loss)
        return J - frozen_penalty, gU[0]

    rng = np.random.default_rng(cfg.seed)
    u = _solve(fun_grad, rng.uniform(-0.5, 0.5, size=d) / np.sqrt(d), cfg)
    means, counts = class_statistics(V[items] @ u, single)
    return u, means[0], counts[0]


def _rows_of(tweak: SparseRatingMatrix, user: int) -> Tuple[np.ndarray, np.ndarray]:
    mask = tweak.users == user
    return tweak.items[mask], tweak.ratings[mask].astype(np.int64)


def fold_in_factor_model(
    model: FactorModel,
    tweak: SparseRatingMatrix,
    users: Sequence[int],
    cfg: TrainConfig,
    signs: Optional[SignMatrix] = None,
) -> FactorModel:
    """
    Copy of `model` with the listed users' rows refitted from their tweak ratings.

    Bi-level models take their targets from `signs`; users without ratings keep
    their rows.
    """
    U = model.U.copy()
    thresholds = None if model.thresholds is None else model.thresholds.copy()
    for user in users:
        if thresholds is None:
            if signs is None:
                raise ConfigurationError("Bi-level fold-in needs a sign matrix")
            row = signs.values[user]
            items = np.flatnonzero(row)
            targets = row[items]
        else:
            items, targets = _rows_of(tweak, user)
        if items.size == 0:
            continue
        fitted = fold_in_user(model, items, targets, cfg, rating_levels=tweak.rating_levels)
        U[user] = fitted.u
        if thresholds is not None:
            thresholds[user] = fitted.theta
    logger.info(f"Folded in {len(users)} users")
    return FactorModel(U=U, V=model.V, thresholds=thresholds)


def fold_in_hmf_model(
    model: HmfModel,
    tweak: SparseRatingMatrix,
    users: Sequence[int],
    cfg: TrainConfig,
    stage_lambdas: Optional[Sequence[float]] = None,
) -> HmfModel:
    """Copy of `model` with the listed users' rows refitted in every stage."""
    stage_U = [stage.U.copy() for stage in model.stages]
    for user in users:
        items, ratings = _rows_of(tweak, user)
        if items.size == 0:
            continue
        for q, row in enumerate(fold_in_hmf(model, items, ratings, cfg, stage_lambdas)):
            stage_U[q][user] = row
    stages = tuple(FactorModel(U=U, V=stage.V) for U, stage in zip(stage_U, model.stages))
    logger.info(f"Folded in {len(users)} users across {len(stages)} stages")
    return HmfModel(rating_levels=model.rating_levels, stages=stages, theta_cut=model.theta_cut)


def fold_in_proximal_model(
    model: FactorModel,
    thresholds: ProximalThresholds,
    tweak: SparseRatingMatrix,
    users: Sequence[int],
    cfg: TrainConfig,
) -> Tuple[FactorModel, ProximalThresholds]:
    """Copy of a proximal model with the listed users' rows and thresholds refitted."""
    U = model.U.copy()
    values = thresholds.values.copy()
    counts = thresholds.counts.copy()
    for user in users:
        items, ratings = _rows_of(tweak, user)
        if items.size == 0:
            continue
        U[user], values[user], counts[user] = fold_in_proximal(model, items, ratings, tweak.rating_levels, cfg)
    logger.info(f"Folded in {len(users)} users")
    return FactorModel(U=U, V=model.V), ProximalThresholds(values=values, counts=counts)
