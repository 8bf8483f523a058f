"""
Clustering helpers: two-way k-means for instance splitting and
self-tuning spectral clustering for grouping label columns.
"""

import logging
import warnings
from typing import Tuple

import numpy as np
from scipy.linalg import eigh
from scipy.spatial.distance import cdist
from sklearn.cluster import KMeans
from sklearn.exceptions import ConvergenceWarning

from mflab.services.exceptions import TooFewInstancesError

logger = logging.getLogger(__name__)

KMEANS_MAX_ITER = 100
LOCAL_SCALE_NEIGHBOR = 7


def kmeans2(X: np.ndarray, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Split rows into two non-empty clusters by Euclidean k-means.

    The cluster holding row 0 comes first. Inputs with fewer than two distinct
    rows are split into first and second half.

    Returns:
        Two sorted arrays of row indices

    Raises:
        TooFewInstancesError: If X has fewer than two rows
    """
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if n < 2:
        raise TooFewInstancesError(n, 2)
    if n == 2:
        return np.array([0]), np.array([1])

    if np.unique(X, axis=0).shape[0] < 2:
        logger.warning(f"All {n} rows are identical; splitting by position")
        return np.arange(n // 2), np.arange(n // 2, n)

    model = KMeans(n_clusters=2, init="k-means++", n_init=1, max_iter=KMEANS_MAX_ITER, random_state=seed)
    labels = model.fit_predict(X)

    for cluster in (0, 1):
        if not np.any(labels == cluster):
            # Reassign the point farthest from the other centre
            other = model.cluster_centers_[1 - cluster]
            farthest = int(np.argmax(np.linalg.norm(X - other, axis=1)))
            labels[farthest] = cluster
            logger.warning("k-means produced an empty cluster; reassigned the farthest point")

    first = labels == labels[0]
    return np.flatnonzero(first), np.flatnonzero(~first)


def local_scales(distances: np.ndarray, neighbor: int = LOCAL_SCALE_NEIGHBOR) -> np.ndarray:
    """Distance from each point to its `neighbor`-th nearest other point, kept positive."""
    n = distances.shape[0]
    k = min(neighbor, n - 1)
    ordered = np.sort(distances, axis=1)
    sigma = ordered[:, k].copy()

    for i in np.flatnonzero(sigma <= 0):
        positive = ordered[i][ordered[i] > 0]
        sigma[i] = positive[0] if positive.size else 1.0
    return sigma


def relabel_by_first_appearance(labels: np.ndarray) -> np.ndarray:
    """Renumber cluster ids so that they appear in increasing order along the array."""
    mapping = {}
    for label in labels.tolist():
        mapping.setdefault(label, len(mapping))
    return np.array([mapping[label] for label in labels.tolist()], dtype=np.int64)


def spectral_partition(points: np.ndarray, n_clusters: int, seed: int) -> np.ndarray:
    """
    Self-tuning spectral clustering of the rows of `points`.

    Affinity exp(-|p_i - p_j|^2 / (sigma_i sigma_j)) with local scales sigma,
    zero diagonal, symmetric normalization D^-1/2 A D^-1/2; the top
    `n_clusters` eigenvectors, row-normalized, are clustered by k-means.
    Empty clusters are repaired and ids are renumbered by first appearance.

    Returns:
        Cluster id per row, in 0..n_clusters-1
    """
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if n_clusters >= n:
        return np.arange(n, dtype=np.int64)
    if n_clusters == 1:
        return np.zeros(n, dtype=np.int64)

    distances = cdist(points, points)
    sigma = local_scales(distances)
    affinity = np.exp(-(distances ** 2) / np.outer(sigma, sigma))
    np.fill_diagonal(affinity, 0.0)

    degree = affinity.sum(axis=1)
    inv_sqrt = np.zeros_like(degree)
    np.divide(1.0, np.sqrt(degree), out=inv_sqrt, where=degree > 0)
    normalized = inv_sqrt[:, None] * affinity * inv_sqrt[None, :]

    _, vectors = eigh(normalized, subset_by_index=[n - n_clusters, n - 1])
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    embedding = np.divide(vectors, norms, out=np.zeros_like(vectors), where=norms > 0)

    with warnings.catch_warnings():
        # Fewer distinct embedded points than clusters; repaired below
        warnings.simplefilter("ignore", ConvergenceWarning)
        labels = KMeans(n_clusters=n_clusters, n_init=10, random_state=seed).fit_predict(embedding)

    for cluster in range(n_clusters):
        if not np.any(labels == cluster):
            sizes = np.bincount(labels, minlength=n_clusters)
            donor = int(np.argmax(sizes))
            labels[np.flatnonzero(labels == donor)[-1]] = cluster
            logger.warning(f"Spectral clustering left group {cluster} empty; moved one member into it")

    return relabel_by_first_appearance(labels)
