"""
Data containers for ratings, factor models and multi-label models.
"""

from mflab.models.rating_matrix import SparseRatingMatrix, SignMatrix, build_rating_matrix
from mflab.models.factors import FactorModel, HmfModel, ProximalThresholds, matmul_transpose
from mflab.models.multilabel import (
    EmbeddingNode,
    EmbeddingTree,
    GroupedLabelEmbedding,
    LabelGrouping,
    MultiLabelDataset,
)

__all__ = [
    "SparseRatingMatrix",
    "SignMatrix",
    "build_rating_matrix",
    "FactorModel",
    "HmfModel",
    "ProximalThresholds",
    "matmul_transpose",
    "EmbeddingNode",
    "EmbeddingTree",
    "GroupedLabelEmbedding",
    "LabelGrouping",
    "MultiLabelDataset",
]
