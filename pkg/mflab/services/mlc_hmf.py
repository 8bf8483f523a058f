"""
Multi-label classification by hierarchical piecewise-linear embedding.

Training splits the instances in two with k-means, fits a low-rank linear
map W = U V (features -> labels) per part, keeps the instances the map
labels well enough, and recurses on the rest. Prediction finds the nearest
retained training instances and lets the maps of their nodes vote.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Tuple

import numpy as np
from scipy.spatial.distance import cdist

from mflab.models.multilabel import EmbeddingNode, EmbeddingTree, MultiLabelDataset
from mflab.schemas.train import MlcConfig
from mflab.services.clustering import kmeans2
from mflab.services.exceptions import DimensionMismatchError, EmptyModelError
from mflab.services.losses import BinaryLossKind, binary_loss, binary_loss_grad
from mflab.services.optimizer import ParameterPacker, minimize, uniform_init

logger = logging.getLogger(__name__)

_EMPTY = np.zeros(0, dtype=np.int64)


def node_objective_grad(
    U: np.ndarray,
    V: np.ndarray,
    X: np.ndarray,
    Y: np.ndarray,
    lam: float,
    loss: BinaryLossKind = BinaryLossKind.SMOOTH_HINGE,
) -> Tuple[float, np.ndarray, np.ndarray]:
    """
    J = sum_{i,l} h(y_il x_i U V_.l) + (lam / 2)(||U||^2 + ||V||^2), with gradients.

    Raises:
        DimensionMismatchError: If U (D x d), V (d x L), X (N x D), Y (N x L) disagree
    """
    if U.shape[0] != X.shape[1] or U.shape[1] != V.shape[0] or Y.shape != (X.shape[0], V.shape[1]):
        raise DimensionMismatchError(
            "U (D x d), V (d x L), X (N x D), Y (N x L)",
            f"U{U.shape}, V{V.shape}, X{X.shape}, Y{Y.shape}",
        )
    signs = np.asarray(Y, dtype=np.float64)
    W = X @ U
    margins = signs * (W @ V)
    J = float(np.sum(binary_loss(loss, margins))) + 0.5 * lam * (float(np.sum(U * U)) + float(np.sum(V * V)))

    G = signs * binary_loss_grad(loss, margins)
    gV = W.T @ G + lam * V
    gU = X.T @ (G @ V.T) + lam * U
    return J, gU, gV


def train_node(X: np.ndarray, Y: np.ndarray, cfg: MlcConfig, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """Fit the node map (U: D x d, V: d x L) by conjugate gradient."""
    n_features = X.shape[1]
    n_labels = Y.shape[1]
    d = cfg.resolved_latent_dim(n_labels)
    rng = np.random.default_rng(seed)
    packer = ParameterPacker({"U": (n_features, d), "V": (d, n_labels)})
    x0 = packer.pack(U=uniform_init(rng, (n_features, d), d), V=uniform_init(rng, (d, n_labels), d))

    def fun_grad(flat: np.ndarray) -> Tuple[float, np.ndarray]:
        blocks = packer.unpack(flat)
        J, gU, gV = node_objective_grad(blocks["U"], blocks["V"], X, Y, cfg.lam, cfg.loss)
        return J, packer.pack(U=gU, V=gV)

    result = minimize(
        fun_grad,
        x0,
        max_iters=cfg.max_iters,
        rel_tol=cfg.rel_tol,
        restart_every=n_features + n_labels,
    )
    blocks = packer.unpack(result.x)
    return blocks["U"].copy(), blocks["V"].copy()


def instance_hamming(X: np.ndarray, Y: np.ndarray, U: np.ndarray, V: np.ndarray) -> np.ndarray:
    """Per-instance fraction of labels that sign(x U V) gets wrong (zeros count as -1)."""
    predicted = np.where(X @ U @ V > 0, 1, -1)
    return np.mean(predicted != Y, axis=1)


def node_seed(seed: int, path: Tuple[int, ...]) -> int:
    """Seed derived from the run seed and a node's position in the tree."""
    return int(np.random.SeedSequence(seed, spawn_key=path).generate_state(1)[0])


class _TreeBuilder:
    """Recursive construction over one dataset and configuration."""

    def __init__(self, dataset: MultiLabelDataset, cfg: MlcConfig):
        self.X = dataset.X
        self.Y = dataset.Y
        self.cfg = cfg

    def grow(self, indices: np.ndarray, depth: int, path: Tuple[int, ...]) -> Tuple[List[EmbeddingNode], np.ndarray]:
        """Split `indices` and build one subtree per part; returns trained nodes and untrained leftovers."""
        if depth > self.cfg.max_depth or indices.size < max(2, self.cfg.min_node_size):
            return [], indices

        parts = kmeans2(self.X[indices], node_seed(self.cfg.seed, path))
        nodes, residue = [], []
        for side, part in enumerate(parts):
            node, leftover = self.build_side(indices[part], depth, path + (side,))
            if node is not None:
                nodes.append(node)
            residue.append(leftover)
        return nodes, np.concatenate(residue)

    def build_side(
        self, indices: np.ndarray, depth: int, path: Tuple[int, ...]
    ) -> Tuple[Optional[EmbeddingNode], np.ndarray]:
        """Train one node on `indices` unless it is too small."""
        if indices.size < self.cfg.min_node_size:
            return None, indices

        X, Y = self.X[indices], self.Y[indices]
        U, V = train_node(X, Y, self.cfg, node_seed(self.cfg.seed, path))
        keep = instance_hamming(X, Y, U, V) <= self.cfg.threshold
        retained = indices[keep]
        rest = indices[~keep]
        logger.debug(f"Node {path}: {indices.size} instances, {retained.size} retained, depth {depth}")

        children, child_residue = self.grow(rest, depth + 1, path) if rest.size else ([], _EMPTY)
        node = EmbeddingNode(
            U=U,
            V=V,
            retained=retained,
            retained_X=self.X[retained],
            retained_Y=self.Y[retained],
            depth=depth,
            path=path,
            children=tuple(children),
            residue=child_residue,
        )
        return node, _EMPTY


def build_tree(dataset: MultiLabelDataset, cfg: MlcConfig, workers: int = 1) -> EmbeddingTree:
    """
    Build the embedding hierarchy.

    With workers > 1 the two top-level subtrees are built concurrently. Node
    seeds depend only on the node's path, so the tree does not depend on the
    schedule.
    """
    builder = _TreeBuilder(dataset, cfg)
    everything = np.arange(dataset.n_instances)
    logger.info(
        f"Building embedding tree: N={dataset.n_instances}, D={dataset.n_features}, L={dataset.n_labels}, "
        f"d={cfg.resolved_latent_dim(dataset.n_labels)}, threshold={cfg.threshold}, depth<={cfg.max_depth}"
    )

    if workers > 1 and everything.size >= max(2, cfg.min_node_size):
        parts = kmeans2(dataset.X, node_seed(cfg.seed, ()))
        with ThreadPoolExecutor(max_workers=min(workers, 2)) as executor:
            futures = [
                executor.submit(builder.build_side, everything[part], 1, (side,))
                for side, part in enumerate(parts)
            ]
            sides = [future.result() for future in futures]
        roots = [node for node, _ in sides if node is not None]
        residue = np.concatenate([leftover for _, leftover in sides])
    else:
        roots, residue = builder.grow(everything, 1, ())

    tree = EmbeddingTree(
        roots=tuple(roots),
        n_instances=dataset.n_instances,
        n_labels=dataset.n_labels,
        max_depth=cfg.max_depth,
        residue=residue,
    )
    retained = sum(node.retained.size for node in tree.nodes)
    logger.info(f"Embedding tree: {len(tree.nodes)} nodes, depth {tree.depth()}, {retained} instances retained")
    return tree


def classify_batch(tree: EmbeddingTree, X_new: np.ndarray, K: int = 5) -> np.ndarray:
    """
    Label matrix for new instances by nearest-neighbour voting.

    The K nearest retained training instances (Euclidean, ties by storage
    order) each contribute their node's sign(x U V); a label is +1 only when
    strictly more votes are positive than negative.

    Raises:
        EmptyModelError: If no node retained any instance
    """
    if tree.neighbour_owner.size == 0:
        raise EmptyModelError("embedding tree retained no training instance")
    X_new = np.atleast_2d(np.asarray(X_new, dtype=np.float64))

    K = min(K, tree.neighbour_owner.size)
    nearest = np.argsort(cdist(X_new, tree.neighbour_features), axis=1, kind="stable")[:, :K]
    owners = tree.neighbour_owner[nearest]

    used = np.unique(owners)
    node_votes = np.zeros((len(tree.nodes),) + (X_new.shape[0], tree.n_labels), dtype=np.int64)
    for k in used:
        node_votes[k] = tree.nodes[k].predict(X_new)

    rows = np.arange(X_new.shape[0])[:, None]
    tally = node_votes[owners, rows].sum(axis=1)
    return np.where(tally > 0, 1, -1).astype(np.int8)


def classify(tree: EmbeddingTree, x_new: np.ndarray, K: int = 5) -> np.ndarray:
    """Label vector of one new instance; see classify_batch."""
    return classify_batch(tree, np.asarray(x_new)[None, :], K)[0]
