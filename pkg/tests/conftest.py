"""
Pytest configuration and shared fixtures.
"""

from typing import Callable, NamedTuple

import numpy as np
import pytest

from mflab.models.factors import FactorModel, HmfModel
from mflab.models.multilabel import MultiLabelDataset
from mflab.models.rating_matrix import SignMatrix, SparseRatingMatrix


class BilevelExample(NamedTuple):
    Y: SignMatrix
    U: np.ndarray
    V: np.ndarray


class HmfExample(NamedTuple):
    Y: SparseRatingMatrix
    model: HmfModel
    completed: np.ndarray
    raw: np.ndarray


@pytest.fixture
def bilevel_example() -> BilevelExample:
    """7 x 7 sign matrix with hand-picked rank-2 factors that classify every observed entry correctly."""
    Y = np.array([
        [0, 1, 0, 0, 1, 0, -1],
        [-1, 0, 1, 1, 1, 0, -1],
        [0, 1, -1, 0, 0, 1, -1],
        [-1, 1, -1, 1, -1, 1, 0],
        [-1, 0, -1, 1, 1, 0, 0],
        [0, -1, 0, 1, 0, 1, 1],
        [1, 1, 0, -1, 0, 0, 0],
    ])
    U = np.array([
        [-0.63, -0.50], [-0.69, -0.96], [0.27, -1.09], [0.63, -0.84],
        [-0.02, -1.03], [1.19, -0.03], [-1.11, 0.21],
    ])
    V = np.array([
        [-0.37, 0.94], [-0.70, -1.02], [-1.06, 0.42], [0.55, -0.97],
        [-1.04, -0.36], [0.67, -0.58], [0.65, 0.81],
    ])
    return BilevelExample(Y=SignMatrix(Y), U=U, V=V)


@pytest.fixture
def hmf_example() -> HmfExample:
    """5 x 7 matrix with R = 5 and four fixed rank-2 stages."""
    dense = np.array([
        [3, 0, 0, 5, 2, 0, 0],
        [5, 4, 0, 1, 5, 3, 4],
        [1, 0, 4, 0, 3, 1, 0],
        [5, 4, 0, 0, 0, 0, 1],
        [0, 3, 2, 0, 5, 2, 0],
    ])
    factors = [
        (
            [[-0.48, -0.54], [0.12, -1.09], [0.98, -0.13], [-0.77, -0.29], [-0.01, -0.94]],
            [[-0.70, -0.63], [-0.36, -0.72], [0.47, -0.53], [-0.51, 0.25], [0.28, -0.80], [-0.52, -0.66], [0.58, -0.37]],
        ),
        (
            [[-0.69, -0.47], [-0.43, 1.06], [0.92, 0.01], [-0.79, 0.05], [0.24, 0.86]],
            [[-0.89, 0.21], [-0.43, 0.64], [0.42, -0.54], [-0.21, -0.67], [0.53, 0.76], [-0.76, 0.01], [0.35, 0.56]],
        ),
        (
            [[-0.42, 0.70], [0.26, -1.05], [-0.80, 0.44], [0.84, 0.08], [-0.05, -0.81]],
            [[0.72, -0.54], [0.80, -0.12], [-0.18, 0.68], [-0.26, 0.62], [0.26, -0.83], [0.59, 0.52], [-0.39, -0.57]],
        ),
        (
            [[0.76, 0.28], [-0.76, -0.73], [0.81, -0.58], [-0.71, -0.43], [-0.43, -0.85]],
            [[-0.89, -0.15], [0.54, 0.55], [-0.17, 0.69], [0.58, 0.35], [-0.86, -0.27], [0.01, 0.83], [0.54, 0.40]],
        ),
    ]
    model = HmfModel(
        rating_levels=5,
        stages=tuple(FactorModel(U=np.array(U), V=np.array(V)) for U, V in factors),
    )
    raw = np.array([
        [3, 2, 2, 5, 2, 5, 1],
        [5, 4, 2, 1, 5, 3, 4],
        [1, 1, 4, 1, 3, 1, 5],
        [5, 4, 1, 3, 2, 4, 1],
        [2, 4, 2, 1, 5, 2, 4],
    ])
    completed = raw.copy()
    completed[4, 1] = 3
    return HmfExample(
        Y=SparseRatingMatrix.from_dense(dense, rating_levels=5),
        model=model,
        completed=completed,
        raw=raw,
    )


@pytest.fixture
def low_rank_ratings() -> SparseRatingMatrix:
    """12 x 10 rank-2 rating matrix with R = 5 and roughly 70% of entries observed."""
    rng = np.random.default_rng(7)
    U = rng.normal(size=(12, 2))
    V = rng.normal(size=(10, 2))
    scores = U @ V.T
    edges = np.quantile(scores, [0.2, 0.4, 0.6, 0.8])
    dense = np.searchsorted(edges, scores) + 1
    mask = rng.random(dense.shape) < 0.7
    # Every user keeps at least two ratings
    mask[:, :2] = True
    return SparseRatingMatrix.from_dense(np.where(mask, dense, 0), rating_levels=5)


@pytest.fixture
def multilabel_dataset() -> MultiLabelDataset:
    """60 instances, 6 features, 8 labels that are linear functions of the features."""
    rng = np.random.default_rng(11)
    X = rng.normal(size=(60, 6))
    W = rng.normal(size=(6, 8))
    Y = np.where(X @ W > 0, 1, -1)
    return MultiLabelDataset(X=X, Y=Y)


@pytest.fixture
def numeric_gradient() -> Callable[[Callable[[np.ndarray], float], np.ndarray], np.ndarray]:
    """Central finite differences of a scalar function."""

    def gradient(fun: Callable[[np.ndarray], float], x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
        x = np.array(x, dtype=np.float64)
        out = np.zeros_like(x)
        for index in np.ndindex(x.shape):
            step = np.zeros_like(x)
            step[index] = eps
            out[index] = (fun(x + step) - fun(x - step)) / (2 * eps)
        return out

    return gradient


@pytest.fixture
def relative_error() -> Callable[..., float]:
    """Scale-free discrepancy ||a - b|| / (||a|| + ||b||) over all given gradient pairs."""

    def error(*pairs) -> float:
        a = np.concatenate([np.ravel(analytic) for analytic, _ in pairs])
        b = np.concatenate([np.ravel(numeric) for _, numeric in pairs])
        scale = np.linalg.norm(a) + np.linalg.norm(b)
        return float(np.linalg.norm(a - b) / max(scale, 1e-12))

    return error


@pytest.fixture
def random_ratings() -> Callable[[int], SparseRatingMatrix]:
    """Seeded rating matrix: 2-7 users and items, R in 2..5, every user rates at least one item."""

    def build(seed: int) -> SparseRatingMatrix:
        rng = np.random.default_rng(seed)
        n_users, n_items = (int(n) for n in rng.integers(2, 8, size=2))
        R = int(rng.integers(2, 6))
        dense = rng.integers(1, R + 1, size=(n_users, n_items))
        mask = rng.random(dense.shape) < rng.uniform(0.3, 0.9)
        mask[np.arange(n_users), rng.integers(n_items, size=n_users)] = True
        return SparseRatingMatrix.from_dense(np.where(mask, dense, 0), rating_levels=R)

    return build
