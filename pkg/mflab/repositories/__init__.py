"""
File access for datasets and trained models.
"""

from mflab.repositories.models import SavedModel, load_model, save_model
from mflab.repositories.multilabel import load_features_csv, load_multilabel_csv, save_labels_csv
from mflab.repositories.ratings import load_ratings_tsv, save_predictions_tsv, save_ratings_tsv

__all__ = [
    "SavedModel",
    "load_model",
    "save_model",
    "load_features_csv",
    "load_multilabel_csv",
    "save_labels_csv",
    "load_ratings_tsv",
    "save_predictions_tsv",
    "save_ratings_tsv",
]
