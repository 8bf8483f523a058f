"""
Group-preserving label embedding.

Labels are first grouped by spectral clustering of the label columns. The
label matrix is then factorized as Y ~ U V where each group's column block
V^k is row-sparse (l2,1 penalty):

    min ||Y - U V||_F^2 + lam1 ||U||_F^2 + lam2 sum_k ||V^k||_{2,1}

U has a closed-form update and each V^k is solved by accelerated proximal
gradient. Finally a sparse linear map Z from features to the latent space is
learned with a penalty coupling correlated latent dimensions:

    min ||X Z - U||_F^2 + (alpha / 2) tr(Z R Z^T) + beta ||Z||_1,  R = 1 - corr(U)

New instances are labelled sign(x Z V) with zeros mapped to -1.
"""

import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from mflab.models.multilabel import GroupedLabelEmbedding, LabelGrouping, MultiLabelDataset
from mflab.schemas.train import GropleConfig
from mflab.services.clustering import spectral_partition
from mflab.services.exceptions import EmptyModelError, KTooLargeError, SingularSystemError

logger = logging.getLogger(__name__)

WARM_START_RIDGE = 1e-6


def label_groups(Y: np.ndarray, n_groups: int, seed: int) -> LabelGrouping:
    """
    Partition the label columns into `n_groups` groups by spectral clustering.

    Raises:
        KTooLargeError: If n_groups exceeds the number of labels
    """
    Y = np.asarray(Y, dtype=np.float64)
    n_labels = Y.shape[1]
    if n_groups > n_labels:
        raise KTooLargeError(n_groups, n_labels)
    assignment = spectral_partition(Y.T, n_groups, seed)
    logger.debug(f"Label group sizes: {np.bincount(assignment).tolist()}")
    return LabelGrouping(assignment=assignment)


def update_U_closed_form(Y: np.ndarray, V: np.ndarray, lam1: float) -> np.ndarray:
    """
    U = Y V^T (V V^T + lam1 I)^-1.

    Raises:
        SingularSystemError: If lam1 = 0 and V V^T is singular
    """
    d = V.shape[0]
    gram = V @ V.T + lam1 * np.eye(d)
    if lam1 == 0 and np.linalg.matrix_rank(gram) < d:
        raise SingularSystemError(f"V V^T is rank-deficient (d={d}) and lam1 = 0")
    try:
        return linalg.solve(gram, V @ np.asarray(Y, dtype=np.float64).T, assume_a="sym").T
    except linalg.LinAlgError as e:
        raise SingularSystemError(str(e)) from e


def prox_l21(V: np.ndarray, tau: float) -> np.ndarray:
    """Row-wise shrinkage: v_i * max(0, 1 - tau / ||v_i||); rows with ||v_i|| <= tau become exactly zero."""
    V = np.asarray(V, dtype=np.float64)
    norms = np.linalg.norm(V, axis=1, keepdims=True)
    scale = np.zeros_like(norms)
    np.divide(np.maximum(norms - tau, 0.0), norms, out=scale, where=norms > tau)
    return V * scale


def soft_threshold(Z: np.ndarray, tau: float) -> np.ndarray:
    """Elementwise sign(z) max(|z| - tau, 0)."""
    Z = np.asarray(Z, dtype=np.float64)
    return np.sign(Z) * np.maximum(np.abs(Z) - tau, 0.0)


def l21_norm(V: np.ndarray) -> float:
    return float(np.sum(np.linalg.norm(V, axis=1)))


@dataclass
class ApgState:
    """Momentum and iterates of an accelerated proximal gradient run."""
    b_prev: float
    b: float
    previous: np.ndarray
    current: np.ndarray
    lipschitz: float

    def search_point(self) -> np.ndarray:
        return self.current + ((self.b_prev - 1.0) / self.b) * (self.current - self.previous)

    def advance(self, new: np.ndarray) -> None:
        self.previous, self.current = self.current, new
        self.b_prev, self.b = self.b, (1.0 + np.sqrt(1.0 + 4.0 * self.b ** 2)) / 2.0


def _accelerated_prox(
    gradient,
    prox,
    start: np.ndarray,
    lipschitz: float,
    tol: float,
    max_iters: int,
) -> Tuple[np.ndarray, int]:
    """FISTA loop; stops when ||W_t - W_{t-1}|| <= tol (1 + ||W_{t-1}||)."""
    state = ApgState(b_prev=1.0, b=1.0, previous=start, current=start, lipschitz=lipschitz)
    for iteration in range(1, max_iters + 1):
        search = state.search_point()
        new = prox(search - gradient(search) / lipschitz)
        step = float(np.linalg.norm(new - state.current))
        scale = 1.0 + float(np.linalg.norm(state.current))
        state.advance(new)
        if step <= tol * scale:
            return state.current, iteration
    return state.current, max_iters


def apg_lipschitz(U: np.ndarray) -> float:
    """||2 U^T U||_F, a Lipschitz constant of V -> 2 U^T (U V - Y)."""
    return float(np.linalg.norm(2.0 * U.T @ U))


def apg_update_Vk(
    U: np.ndarray,
    Yk: np.ndarray,
    lam2: float,
    tol: float = 1e-5,
    max_iters: int = 500,
    V0: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    Solve min_V ||Y^k - U V||_F^2 + lam2 ||V||_{2,1} by accelerated proximal gradient.

    Starts from V0, or from the ridge solution (U^T U + 1e-6 I)^-1 U^T Y^k.
    """
    U = np.asarray(U, dtype=np.float64)
    Yk = np.asarray(Yk, dtype=np.float64)
    UtU = U.T @ U
    UtY = U.T @ Yk
    lipschitz = apg_lipschitz(U)
    if lipschitz == 0:
        return np.zeros((U.shape[1], Yk.shape[1]))
    if V0 is None:
        V0 = linalg.solve(UtU + WARM_START_RIDGE * np.eye(UtU.shape[0]), UtY, assume_a="sym")

    V, n_iter = _accelerated_prox(
        gradient=lambda V: 2.0 * (UtU @ V - UtY),
        prox=lambda V: prox_l21(V, lam2 / lipschitz),
        start=np.asarray(V0, dtype=np.float64),
        lipschitz=lipschitz,
        tol=tol,
        max_iters=max_iters,
    )
    logger.debug(f"APG block of {Yk.shape[1]} labels finished after {n_iter} iterations")
    return V


def block_objective(U: np.ndarray, Yk: np.ndarray, Vk: np.ndarray, lam2: float) -> float:
    residual = Yk - U @ Vk
    return float(np.sum(residual ** 2)) + lam2 * l21_norm(Vk)


def group_objective(
    Y: np.ndarray,
    U: np.ndarray,
    V: np.ndarray,
    grouping: LabelGrouping,
    lam1: float,
    lam2: float,
) -> float:
    """||Y - U V||^2 + lam1 ||U||^2 + lam2 sum_k ||V^k||_{2,1}."""
    residual = Y - U @ V
    penalty = sum(l21_norm(V[:, cols]) for cols in grouping.groups())
    return float(np.sum(residual ** 2)) + lam1 * float(np.sum(U ** 2)) + lam2 * penalty


class LabelEmbedding(NamedTuple):
    """Label-space factorization with its grouping and outer objective history."""
    U: np.ndarray
    V: np.ndarray
    grouping: LabelGrouping
    history: List[float]


def _initial_basis(Y: np.ndarray, d: int, rng: np.random.Generator) -> np.ndarray:
    """Leading scaled left singular vectors of Y; extra columns small random."""
    left, singular, _ = np.linalg.svd(Y, full_matrices=False)
    rank = min(d, singular.size)
    U = np.empty((Y.shape[0], d))
    U[:, :rank] = left[:, :rank] * singular[:rank]
    if d > rank:
        U[:, rank:] = rng.normal(scale=1e-3, size=(Y.shape[0], d - rank))
    return U


def label_embedding(
    Y: np.ndarray,
    d: int,
    n_groups: int,
    lam1: float,
    lam2: float,
    seed: int = 0,
    tol: float = 1e-5,
    max_outer: int = 50,
    max_iters: int = 500,
    workers: int = 1,
    grouping: Optional[LabelGrouping] = None,
) -> LabelEmbedding:
    """
    Alternate group-wise APG updates of V with closed-form updates of U.

    A group block is only replaced when its sub-objective does not increase,
    so the outer objective never goes up.
    """
    Y = np.asarray(Y, dtype=np.float64)
    grouping = grouping or label_groups(Y, n_groups, seed)
    blocks = grouping.groups()
    rng = np.random.default_rng(seed)

    U = _initial_basis(Y, d, rng)
    V = np.zeros((d, Y.shape[1]))
    for cols in blocks:
        V[:, cols] = apg_update_Vk(U, Y[:, cols], lam2, tol, max_iters)
    U = update_U_closed_form(Y, V, lam1)
    history = [group_objective(Y, U, V, grouping, lam1, lam2)]

    logger.info(
        f"Label embedding: N={Y.shape[0]}, L={Y.shape[1]}, d={d}, K={grouping.n_groups}, "
        f"lam1={lam1}, lam2={lam2}"
    )

    def solve_block(cols: np.ndarray) -> np.ndarray:
        candidate = apg_update_Vk(U, Y[:, cols], lam2, tol, max_iters, V0=V[:, cols])
        if block_objective(U, Y[:, cols], candidate, lam2) <= block_objective(U, Y[:, cols], V[:, cols], lam2):
            return candidate
        return V[:, cols]

    for outer in range(1, max_outer + 1):
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as executor:
                solved = list(executor.map(solve_block, blocks))
        else:
            solved = [solve_block(cols) for cols in blocks]

        V_new = np.zeros_like(V)
        for cols, block in zip(blocks, solved):
            V_new[:, cols] = block
        U_new = update_U_closed_form(Y, V_new, lam1)

        objective = group_objective(Y, U_new, V_new, grouping, lam1, lam2)
        if objective > history[-1]:
            logger.debug(f"Outer round {outer}: objective would rise; keeping previous factors")
            break
        U, V = U_new, V_new
        change = abs(history[-1] - objective) / max(1.0, abs(history[-1]))
        history.append(objective)
        logger.debug(f"Outer round {outer}: objective={objective:.6g}")
        if change < tol:
            break

    logger.info(f"Label embedding finished after {len(history) - 1} rounds: objective={history[-1]:.6g}")
    return LabelEmbedding(U=U, V=V, grouping=grouping, history=history)


def correlation_penalty(U: np.ndarray) -> np.ndarray:
    """R = 1 - C over the columns of U; C is 0 for any pair involving a constant column and R_ii = 0."""
    U = np.asarray(U, dtype=np.float64)
    d = U.shape[1]
    spread = U.std(axis=0)
    varying = spread > 0
    C = np.zeros((d, d))
    if varying.sum() > 1:
        C[np.ix_(varying, varying)] = np.corrcoef(U[:, varying], rowvar=False)
    if not varying.all():
        logger.warning(f"{int((~varying).sum())} latent columns are constant; their correlations are taken as 0")
    np.fill_diagonal(C, 1.0)
    R = 1.0 - C
    np.fill_diagonal(R, 0.0)
    return R


def feature_lipschitz(X: np.ndarray, alpha: float, R: np.ndarray) -> float:
    """||2 X^T X||_F + alpha ||R||_F, a Lipschitz constant of Z -> 2 X^T (X Z - U) + alpha Z R."""
    return float(np.linalg.norm(2.0 * X.T @ X)) + alpha * float(np.linalg.norm(R))


def feature_embedding(
    X: np.ndarray,
    U: np.ndarray,
    alpha: float,
    beta: float,
    tol: float = 1e-5,
    max_iters: int = 500,
) -> np.ndarray:
    """
    Sparse map Z (D x d) with X Z ~ U, by accelerated proximal gradient with soft-thresholding.

    Starts from (X^T X + 1e-6 I)^-1 X^T U.
    """
    X = np.asarray(X, dtype=np.float64)
    U = np.asarray(U, dtype=np.float64)
    R = correlation_penalty(U)
    XtX = X.T @ X
    XtU = X.T @ U
    lipschitz = feature_lipschitz(X, alpha, R)
    if lipschitz == 0:
        return np.zeros((X.shape[1], U.shape[1]))

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", linalg.LinAlgWarning)
        Z0 = linalg.solve(XtX + WARM_START_RIDGE * np.eye(XtX.shape[0]), XtU, assume_a="sym")

    Z, n_iter = _accelerated_prox(
        gradient=lambda Z: 2.0 * (XtX @ Z - XtU) + alpha * Z @ R,
        prox=lambda Z: soft_threshold(Z, beta / lipschitz),
        start=Z0,
        lipschitz=lipschitz,
        tol=tol,
        max_iters=max_iters,
    )
    logger.debug(
        f"Feature embedding finished after {n_iter} iterations; "
        f"{int(np.count_nonzero(Z == 0))}/{Z.size} entries zero"
    )
    return Z


def feature_objective(X: np.ndarray, U: np.ndarray, Z: np.ndarray, alpha: float, beta: float) -> float:
    R = correlation_penalty(U)
    return (
        float(np.sum((X @ Z - U) ** 2))
        + 0.5 * alpha * float(np.trace(Z @ R @ Z.T))
        + beta * float(np.sum(np.abs(Z)))
    )


def train_grople(dataset: MultiLabelDataset, cfg: GropleConfig, workers: int = 1) -> GroupedLabelEmbedding:
    """Grouping, label embedding and feature embedding end to end."""
    embedding = label_embedding(
        dataset.Y,
        d=cfg.latent_dim,
        n_groups=cfg.n_groups,
        lam1=cfg.lam1,
        lam2=cfg.lam2,
        seed=cfg.seed,
        tol=cfg.tol,
        max_outer=cfg.max_outer,
        max_iters=cfg.max_iters,
        workers=workers,
    )
    Z = feature_embedding(dataset.X, embedding.U, cfg.alpha, cfg.beta, cfg.tol, cfg.max_iters)
    return GroupedLabelEmbedding(
        U=embedding.U,
        V=embedding.V,
        Z=Z,
        grouping=embedding.grouping,
        lam1=cfg.lam1,
        lam2=cfg.lam2,
        alpha=cfg.alpha,
        beta=cfg.beta,
    )


def predict_grople(model: GroupedLabelEmbedding, X_new: np.ndarray) -> np.ndarray:
    """
    sign(x Z V) per instance, zeros mapped to -1.

    Accepts one instance (1-D) or a matrix of instances.

    Raises:
        EmptyModelError: If the model has no label columns
    """
    if model.V.shape[1] == 0:
        raise EmptyModelError("label embedding has no label columns")
    X_new = np.asarray(X_new, dtype=np.float64)
    scores = np.atleast_2d(X_new) @ model.Z @ model.V
    labels = np.where(scores > 0, 1, -1).astype(np.int8)
    return labels[0] if X_new.ndim == 1 else labels


class FeaturePenaltyResult(NamedTuple):
    """Selected (alpha, beta) with the validation hamming loss of every pair."""
    alpha: float
    beta: float
    scores: Dict[Tuple[float, float], float]


def tune_feature_penalties(
    dataset: MultiLabelDataset,
    cfg: GropleConfig,
    alpha_grid: Sequence[float],
    beta_grid: Sequence[float],
    holdout_fraction: float = 0.2,
    workers: int = 1,
) -> FeaturePenaltyResult:
    """
    Grid-search alpha and beta on an inner holdout.

    The label embedding of the inner training part is computed once and reused
    for every pair; the smallest validation hamming loss wins, ties going to the
    earlier pair in grid order.
    """
    rng = np.random.default_rng(cfg.seed)
    order = rng.permutation(dataset.n_instances)
    n_validation = max(1, int(round(holdout_fraction * dataset.n_instances)))
    validation, training = np.sort(order[:n_validation]), np.sort(order[n_validation:])
    inner_train = dataset.take(training)
    inner_validation = dataset.take(validation)

    embedding = label_embedding(
        inner_train.Y,
        d=cfg.latent_dim,
        n_groups=cfg.n_groups,
        lam1=cfg.lam1,
        lam2=cfg.lam2,
        seed=cfg.seed,
        tol=cfg.tol,
        max_outer=cfg.max_outer,
        max_iters=cfg.max_iters,
        workers=workers,
    )

    scores: Dict[Tuple[float, float], float] = {}
    best: Optional[Tuple[float, float]] = None
    for alpha in alpha_grid:
        for beta in beta_grid:
            Z = feature_embedding(inner_train.X, embedding.U, alpha, beta, cfg.tol, cfg.max_iters)
            predicted = np.where(inner_validation.X @ Z @ embedding.V > 0, 1, -1)
            loss = float(np.mean(predicted != inner_validation.Y))
            scores[(float(alpha), float(beta))] = loss
            if best is None or loss < scores[best]:
                best = (float(alpha), float(beta))
            logger.debug(f"alpha={alpha:.0e}, beta={beta:.0e}: hamming loss {loss:.4f}")

    logger.info(f"Selected alpha={best[0]:.0e}, beta={best[1]:.0e} (hamming loss {scores[best]:.4f})")
    return FeaturePenaltyResult(alpha=best[0], beta=best[1], scores=scores)
