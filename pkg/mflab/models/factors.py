"""
Latent factor containers shared by the collaborative-filtering solvers.
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from mflab.services.exceptions import DimensionMismatchError


def _frozen(array: np.ndarray) -> np.ndarray:
    out = np.array(array, dtype=np.float64, copy=True)
    out.setflags(write=False)
    return out


def matmul_transpose(U: np.ndarray, V: np.ndarray) -> np.ndarray:
    """
    Real-valued prediction matrix X = U V^T.

    Raises:
        DimensionMismatchError: If U and V disagree on the latent dimension
    """
    U = np.asarray(U, dtype=np.float64)
    V = np.asarray(V, dtype=np.float64)
    if U.ndim != 2 or V.ndim != 2 or U.shape[1] != V.shape[1]:
        raise DimensionMismatchError("U (N x d) and V (M x d)", f"U{U.shape}, V{V.shape}")
    return U @ V.T


@dataclass(frozen=True, eq=False)
class FactorModel:
    """
    Dense factor pair (U: N x d, V: M x d) with optional per-user thresholds.

    `thresholds` is N x (R-1) for ordinal models. Rows are not forced to be
    sorted during training; prediction sorts its own copy.
    """

    U: np.ndarray
    V: np.ndarray
    thresholds: Optional[np.ndarray] = None

    def __post_init__(self):
        U = _frozen(self.U)
        V = _frozen(self.V)
        if U.ndim != 2 or V.ndim != 2 or U.shape[1] != V.shape[1]:
            raise DimensionMismatchError("U (N x d) and V (M x d)", f"U{U.shape}, V{V.shape}")
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "V", V)

        if self.thresholds is not None:
            thresholds = _frozen(self.thresholds)
            if thresholds.ndim != 2 or thresholds.shape[0] != U.shape[0]:
                raise DimensionMismatchError(f"thresholds ({U.shape[0]} x R-1)", f"{thresholds.shape}")
            object.__setattr__(self, "thresholds", thresholds)

    @property
    def latent_dim(self) -> int:
        return self.U.shape[1]

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.U.shape[0], self.V.shape[0])

    def predict_real(self) -> np.ndarray:
        return matmul_transpose(self.U, self.V)

    def thresholds_sorted(self) -> bool:
        """Whether every threshold row is non-decreasing."""
        if self.thresholds is None:
            return True
        return bool(np.all(np.diff(self.thresholds, axis=1) >= 0))


@dataclass(frozen=True, eq=False)
class HmfModel:
    """Ordered bi-level stages of a hierarchical factorization; stage q separates ratings <= q from > q."""

    rating_levels: int
    stages: Tuple[FactorModel, ...]
    theta_cut: float = 0.0

    def __post_init__(self):
        stages = tuple(self.stages)
        if len(stages) != self.rating_levels - 1:
            raise DimensionMismatchError(f"{self.rating_levels - 1} stages", f"{len(stages)} stages")
        dims = {stage.latent_dim for stage in stages}
        shapes = {stage.shape for stage in stages}
        if len(dims) > 1 or len(shapes) > 1:
            raise DimensionMismatchError("identical stage factor shapes", f"dims={dims}, shapes={shapes}")
        object.__setattr__(self, "stages", stages)

    @property
    def latent_dim(self) -> int:
        return self.stages[0].latent_dim


@dataclass(frozen=True, eq=False)
class ProximalThresholds:
    """
    Per-(user, rating) class means used by proximal MMMF.

    `values[i, r-1]` is the mean prediction over items user i rated r, or NaN
    when the user never gave that rating. `counts[i, r-1]` is the class size.
    """

    values: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        values = _frozen(self.values)
        counts = np.array(self.counts, dtype=np.int64, copy=True)
        if values.shape != counts.shape:
            raise DimensionMismatchError(f"counts of shape {values.shape}", f"{counts.shape}")
        counts.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "counts", counts)

    @property
    def defined(self) -> np.ndarray:
        return self.counts > 0

    @property
    def rating_levels(self) -> int:
        return self.values.shape[1]
