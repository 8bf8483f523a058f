"""
Maximum-margin matrix factorization for bi-level and ordinal ratings.

Both variants minimize a smooth margin loss over observed entries plus
(lam / 2)(||U||_F^2 + ||V||_F^2). The ordinal variant additionally learns
R-1 thresholds per user; entry (i, j) is pushed above every threshold below
its rating and below every threshold from its rating on.
"""

import logging
from typing import Callable, Optional, Tuple

import numpy as np
from scipy import sparse

from mflab.models.factors import FactorModel
from mflab.models.rating_matrix import SignMatrix, SparseRatingMatrix
from mflab.schemas.train import TrainConfig
from mflab.services.exceptions import DimensionMismatchError, NoObservedEntriesError, OptimizationDivergedError
from mflab.services.losses import BinaryLossKind, binary_loss, binary_loss_grad
from mflab.services.optimizer import OptimizeResult, ParameterPacker, minimize, uniform_init

logger = logging.getLogger(__name__)


def frobenius_penalty(U: np.ndarray, V: np.ndarray, lam: float) -> float:
    return 0.5 * lam * (float(np.sum(U * U)) + float(np.sum(V * V)))


def check_factors(U: np.ndarray, V: np.ndarray, shape: Tuple[int, int]) -> None:
    if U.shape[1] != V.shape[1] or (U.shape[0], V.shape[0]) != tuple(shape):
        raise DimensionMismatchError(f"U ({shape[0]} x d), V ({shape[1]} x d)", f"U{U.shape}, V{V.shape}")


def entry_predictions(U: np.ndarray, V: np.ndarray, users: np.ndarray, items: np.ndarray) -> np.ndarray:
    """U_i . V_j for each listed (i, j)."""
    return np.einsum("ij,ij->i", U[users], V[items])


def scatter_gradient(
    coefficients: np.ndarray,
    users: np.ndarray,
    items: np.ndarray,
    U: np.ndarray,
    V: np.ndarray,
    lam: float,
) -> Tuple[np.ndarray, np.ndarray]:
    """Factor gradients for a loss whose derivative w.r.t. x_ij is `coefficients`."""
    G = sparse.csr_matrix((coefficients, (users, items)), shape=(U.shape[0], V.shape[0]))
    return G @ V + lam * U, G.T @ U + lam * V


def run_solver(
    fun_grad: Callable[[np.ndarray], Tuple[float, np.ndarray]],
    x0: np.ndarray,
    cfg: TrainConfig,
    restart_default: int,
    label: str,
) -> OptimizeResult:
    """Run the configured optimizer and log the outcome."""
    result = minimize(
        fun_grad,
        x0,
        step_rule=cfg.step_rule,
        step_size=cfg.step_size,
        max_iters=cfg.max_iters,
        rel_tol=cfg.rel_tol,
        restart_every=cfg.restart_every or restart_default,
    )
    if not np.isfinite(result.fun):
        raise OptimizationDivergedError(result.n_iter, result.fun)
    logger.info(
        f"{label} finished after {result.n_iter} iterations: "
        f"objective={result.fun:.6g} ({result.message})"
    )
    return result


def bmmmf_objective_grad(
    U: np.ndarray,
    V: np.ndarray,
    Y: SignMatrix,
    lam: float,
    loss: BinaryLossKind = BinaryLossKind.SMOOTH_HINGE,
) -> Tuple[float, np.ndarray, np.ndarray]:
    """
    Bi-level objective and its gradients.

    J = sum over observed (i, j) of h(y_ij U_i V_j^T) + (lam / 2)(||U||^2 + ||V||^2)

    Raises:
        DimensionMismatchError: If U, V and Y shapes disagree
    """
    check_factors(U, V, Y.shape)
    signs = Y.values.astype(np.float64)
    observed = Y.observed

    X = U @ V.T
    z = signs * X
    J = float(np.sum(binary_loss(loss, z[observed]))) + frobenius_penalty(U, V, lam)

    G = np.zeros_like(X)
    G[observed] = signs[observed] * binary_loss_grad(loss, z[observed])
    return J, G @ V + lam * U, G.T @ U + lam * V


def train_bmmmf(Y: SignMatrix, cfg: TrainConfig) -> FactorModel:
    """
    Fit U, V to a sign matrix.

    Raises:
        NoObservedEntriesError: If Y has no observed entry
    """
    if Y.n_observed() == 0:
        raise NoObservedEntriesError(Y.shape)

    n_users, n_items = Y.shape
    d = cfg.latent_dim
    rng = np.random.default_rng(cfg.seed)
    packer = ParameterPacker({"U": (n_users, d), "V": (n_items, d)})
    x0 = packer.pack(U=uniform_init(rng, (n_users, d), d), V=uniform_init(rng, (n_items, d), d))

    logger.info(
        f"Training BMMMF: shape={n_users}x{n_items}, observed={Y.n_observed()}, "
        f"d={d}, lam={cfg.lam}, seed={cfg.seed}"
    )

    def fun_grad(flat: np.ndarray) -> Tuple[float, np.ndarray]:
        blocks = packer.unpack(flat)
        J, gU, gV = bmmmf_objective_grad(blocks["U"], blocks["V"], Y, cfg.lam, cfg.loss)
        return J, packer.pack(U=gU, V=gV)

    result = run_solver(fun_grad, x0, cfg, n_users + n_items, "BMMMF")
    blocks = packer.unpack(result.x)
    return FactorModel(U=blocks["U"], V=blocks["V"])


def predict_bilevel(
    model: FactorModel,
    theta_cut: float = 0.0,
    source: Optional[SignMatrix] = None,
) -> np.ndarray:
    """
    Dense +1/-1 completion: +1 where U_i V_j^T >= theta_cut.

    Observed entries of `source`, when given, are copied through unchanged.
    """
    X = model.predict_real()
    completed = np.where(X >= theta_cut, 1, -1).astype(np.int8)
    if source is not None:
        observed = source.observed
        completed[observed] = source.values[observed]
    return completed


def initial_thresholds(n_users: int, rating_levels: int) -> np.ndarray:
    """theta_{i,r} = r - R/2 for r = 1..R-1."""
    row = np.arange(1, rating_levels, dtype=np.float64) - rating_levels / 2.0
    return np.tile(row, (n_users, 1))


def mmmf_objective_grad(
    U: np.ndarray,
    V: np.ndarray,
    theta: np.ndarray,
    Y: SparseRatingMatrix,
    lam: float,
    loss: BinaryLossKind = BinaryLossKind.SMOOTH_HINGE,
) -> Tuple[float, np.ndarray, np.ndarray, np.ndarray]:
    """
    Ordinal all-threshold objective and gradients for U, V and theta.

    With T = +1 when r >= y_ij and -1 otherwise,
    J = sum_r sum_observed h(T (theta_{i,r} - U_i V_j^T)) + (lam / 2)(||U||^2 + ||V||^2).

    Raises:
        DimensionMismatchError: If factor or threshold shapes disagree with Y
    """
    check_factors(U, V, Y.shape)
    n_thresholds = Y.rating_levels - 1
    if theta.shape != (Y.n_users, n_thresholds):
        raise DimensionMismatchError(f"theta ({Y.n_users} x {n_thresholds})", f"{theta.shape}")

    users, items = Y.users, Y.items
    ratings = Y.ratings.astype(np.int64)
    x = entry_predictions(U, V, users, items)

    J = frobenius_penalty(U, V, lam)
    g_theta = np.zeros_like(theta)
    coefficients = np.zeros_like(x)
    for r in range(1, n_thresholds + 1):
        T = np.where(r >= ratings, 1.0, -1.0)
        z = T * (theta[users, r - 1] - x)
        J += float(np.sum(binary_loss(loss, z)))
        slope = T * binary_loss_grad(loss, z)
        g_theta[:, r - 1] = np.bincount(users, weights=slope, minlength=Y.n_users)
        coefficients -= slope

    gU, gV = scatter_gradient(coefficients, users, items, U, V, lam)
    return J, gU, gV, g_theta


def train_mmmf(Y: SparseRatingMatrix, cfg: TrainConfig) -> FactorModel:
    """
    Fit U, V and per-user thresholds to an ordinal rating matrix.

    Raises:
        NoObservedEntriesError: If Y has no observed entry
    """
    if len(Y) == 0:
        raise NoObservedEntriesError(Y.shape)

    unrated = int(np.count_nonzero(Y.user_counts() == 0))
    if unrated:
        logger.warning(f"{unrated} users have no observed rating; only regularization acts on their factors")

    n_users, n_items = Y.shape
    d = cfg.latent_dim
    rng = np.random.default_rng(cfg.seed)
    packer = ParameterPacker({
        "U": (n_users, d),
        "V": (n_items, d),
        "theta": (n_users, Y.rating_levels - 1),
    })
    x0 = packer.pack(
        U=uniform_init(rng, (n_users, d), d),
        V=uniform_init(rng, (n_items, d), d),
        theta=initial_thresholds(n_users, Y.rating_levels),
    )

    logger.info(
        f"Training MMMF: shape={n_users}x{n_items}, observed={len(Y)}, R={Y.rating_levels}, "
        f"d={d}, lam={cfg.lam}, seed={cfg.seed}"
    )

    def fun_grad(flat: np.ndarray) -> Tuple[float, np.ndarray]:
        blocks = packer.unpack(flat)
        J, gU, gV, g_theta = mmmf_objective_grad(
            blocks["U"], blocks["V"], blocks["theta"], Y, cfg.lam, cfg.loss
        )
        return J, packer.pack(U=gU, V=gV, theta=g_theta)

    result = run_solver(fun_grad, x0, cfg, n_users + n_items, "MMMF")
    blocks = packer.unpack(result.x)
    model = FactorModel(U=blocks["U"], V=blocks["V"], thresholds=blocks["theta"])
    if not model.thresholds_sorted():
        logger.debug("Some threshold rows are not monotone; prediction sorts them")
    return model


def ordinal_regions(X: np.ndarray, thresholds: np.ndarray) -> np.ndarray:
    """
    Rating r for each x with theta_{r-1} <= x < theta_r (sentinels at +-inf).

    Rows of `thresholds` are sorted before use.
    """
    ordered = np.sort(thresholds, axis=1)
    ratings = np.ones(X.shape, dtype=np.int64)
    for k in range(ordered.shape[1]):
        ratings += X >= ordered[:, k][:, None]
    return ratings


def predict_ordinal(model: FactorModel, source: Optional[SparseRatingMatrix] = None) -> np.ndarray:
    """
    Dense rating completion from an ordinal model.

    Observed entries of `source`, when given, are copied through unchanged.
    """
    if model.thresholds is None:
        raise DimensionMismatchError("model with thresholds", "model without thresholds")
    completed = ordinal_regions(model.predict_real(), model.thresholds)
    if source is not None:
        completed[source.users, source.items] = source.ratings
    return completed
