"""
Containers for multi-label data and the models learned from it.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from mflab.services.exceptions import DimensionMismatchError, NonBinaryLabelError


def _readonly(array: np.ndarray, dtype=np.float64) -> np.ndarray:
    out = np.array(array, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class MultiLabelDataset:
    """Feature matrix X (N x D) with label matrix Y (N x L) over {-1, +1}."""

    X: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        X = _readonly(self.X)
        raw = np.asarray(self.Y)
        if X.ndim != 2 or raw.ndim != 2 or X.shape[0] != raw.shape[0]:
            raise DimensionMismatchError("X (N x D) and Y (N x L)", f"X{X.shape}, Y{raw.shape}")
        binary = np.isin(raw, (-1, 1))
        if not binary.all():
            row, column = np.argwhere(~binary)[0]
            raise NonBinaryLabelError(raw[row, column].item(), int(row), int(column))
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", _readonly(raw, dtype=np.int8))

    @property
    def n_instances(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    @property
    def n_labels(self) -> int:
        return self.Y.shape[1]

    def take(self, indices: np.ndarray) -> "MultiLabelDataset":
        indices = np.asarray(indices, dtype=np.int64)
        return MultiLabelDataset(X=self.X[indices], Y=self.Y[indices])


@dataclass(frozen=True, eq=False)
class EmbeddingNode:
    """
    One trained node of the embedding hierarchy.

    `retained` holds the training-set indices whose per-instance hamming loss
    under (U, V) stayed within the threshold; their features and labels are
    kept for nearest-neighbour search at prediction time. `residue` holds the
    indices that were neither retained here nor handed to a trained child.
    """

    U: np.ndarray
    V: np.ndarray
    retained: np.ndarray
    retained_X: np.ndarray
    retained_Y: np.ndarray
    depth: int
    path: Tuple[int, ...]
    children: Tuple["EmbeddingNode", ...] = ()
    residue: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __post_init__(self):
        object.__setattr__(self, "U", _readonly(self.U))
        object.__setattr__(self, "V", _readonly(self.V))
        object.__setattr__(self, "retained", _readonly(self.retained, dtype=np.int64))
        object.__setattr__(self, "retained_X", _readonly(self.retained_X))
        object.__setattr__(self, "retained_Y", _readonly(self.retained_Y, dtype=np.int8))
        object.__setattr__(self, "residue", _readonly(self.residue, dtype=np.int64))
        object.__setattr__(self, "children", tuple(self.children))

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Labels sign(X U V) with zeros mapped to -1."""
        scores = np.atleast_2d(X) @ self.U @ self.V
        return np.where(scores > 0, 1, -1).astype(np.int8)


@dataclass(frozen=True, eq=False)
class EmbeddingTree:
    """
    Hierarchy of embedding nodes produced by recursive 2-way splitting.

    `roots` are the trained nodes of the first split. `residue` holds indices
    of training instances that never reached a trained node (too small a
    cluster or depth exhausted at the top level). Retained instances of all
    nodes are concatenated for neighbour search.
    """

    roots: Tuple[EmbeddingNode, ...]
    n_instances: int
    n_labels: int
    max_depth: int
    residue: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    _nodes: Tuple[EmbeddingNode, ...] = field(default=(), init=False, repr=False)
    _neighbour_X: Optional[np.ndarray] = field(default=None, init=False, repr=False)
    _neighbour_node: Optional[np.ndarray] = field(default=None, init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "roots", tuple(self.roots))
        object.__setattr__(self, "residue", _readonly(self.residue, dtype=np.int64))

        nodes: List[EmbeddingNode] = []
        stack = list(reversed(self.roots))
        while stack:
            node = stack.pop()
            nodes.append(node)
            stack.extend(reversed(node.children))
        object.__setattr__(self, "_nodes", tuple(nodes))

        with_instances = [(k, node) for k, node in enumerate(nodes) if node.retained.size]
        if with_instances:
            neighbour_X = np.vstack([node.retained_X for _, node in with_instances])
            neighbour_node = np.concatenate(
                [np.full(node.retained.size, k, dtype=np.int64) for k, node in with_instances]
            )
        else:
            neighbour_X = np.zeros((0, 0))
            neighbour_node = np.zeros(0, dtype=np.int64)
        object.__setattr__(self, "_neighbour_X", neighbour_X)
        object.__setattr__(self, "_neighbour_node", neighbour_node)

    @property
    def nodes(self) -> Tuple[EmbeddingNode, ...]:
        """All trained nodes in depth-first pre-order."""
        return self._nodes

    @property
    def neighbour_features(self) -> np.ndarray:
        return self._neighbour_X

    @property
    def neighbour_owner(self) -> np.ndarray:
        """Node position (into `nodes`) owning each neighbour row."""
        return self._neighbour_node

    def depth(self) -> int:
        return max((node.depth for node in self._nodes), default=0)

    def all_residue(self) -> np.ndarray:
        parts = [self.residue] + [node.residue for node in self._nodes]
        return np.sort(np.concatenate(parts))


@dataclass(frozen=True, eq=False)
class LabelGrouping:
    """Partition of label indices into K groups."""

    assignment: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "assignment", _readonly(self.assignment, dtype=np.int64))

    @property
    def n_groups(self) -> int:
        return int(self.assignment.max()) + 1 if self.assignment.size else 0

    @property
    def n_labels(self) -> int:
        return int(self.assignment.size)

    def groups(self) -> List[np.ndarray]:
        """Label indices per group, ascending within each group."""
        return [np.flatnonzero(self.assignment == k) for k in range(self.n_groups)]


@dataclass(frozen=True, eq=False)
class GroupedLabelEmbedding:
    """
    Trained group-preserving label embedding.

    U (N x d) is the label-space basis for the training instances, V (d x L)
    the coefficients whose column blocks belong to the label groups, and
    Z (D x d) the sparse linear map from features into the latent space.
    """

    U: np.ndarray
    V: np.ndarray
    Z: np.ndarray
    grouping: LabelGrouping
    lam1: float
    lam2: float
    alpha: float
    beta: float

    def __post_init__(self):
        U = _readonly(self.U)
        V = _readonly(self.V)
        Z = _readonly(self.Z)
        if U.shape[1] != V.shape[0] or Z.shape[1] != V.shape[0]:
            raise DimensionMismatchError("U (N x d), V (d x L), Z (D x d)", f"U{U.shape}, V{V.shape}, Z{Z.shape}")
        if V.shape[1] != self.grouping.n_labels:
            raise DimensionMismatchError(f"{self.grouping.n_labels} label columns", f"{V.shape[1]}")
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "V", V)
        object.__setattr__(self, "Z", Z)

    def group_block(self, k: int) -> np.ndarray:
        """Coefficient block V^k for group k."""
        return self.V[:, self.grouping.groups()[k]]
