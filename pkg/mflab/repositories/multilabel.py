"""
Multi-label dataset files: a numeric feature CSV and a label CSV with the same rows.
"""

import logging
from pathlib import Path
from typing import Union

import numpy as np
import pandas as pd

from mflab.models.multilabel import MultiLabelDataset
from mflab.services.exceptions import NonBinaryLabelError, ParseError, RowCountMismatchError

logger = logging.getLogger(__name__)


def _read_matrix(path: Path) -> np.ndarray:
    if not path.exists():
        raise FileNotFoundError(f"File not found: {path}")
    try:
        frame = pd.read_csv(path, header=None, dtype=str, skip_blank_lines=True)
    except pd.errors.EmptyDataError:
        return np.zeros((0, 0))
    except pd.errors.ParserError as e:
        raise ParseError(None, str(e), str(path)) from e

    values = frame.apply(lambda column: pd.to_numeric(column.str.strip(), errors="coerce"))
    missing = values.isna().to_numpy()
    if missing.any():
        row, column = np.argwhere(missing)[0]
        raise ParseError(int(row) + 1, f"column {int(column) + 1} value '{frame.iat[row, column]}' is not numeric", str(path))
    return values.to_numpy(dtype=np.float64)


def load_features_csv(path: Union[str, Path]) -> np.ndarray:
    """Feature matrix only, for labelling new instances."""
    X = _read_matrix(Path(path))
    logger.info(f"Loaded {X.shape[0]} feature rows from {path}")
    return X


def load_multilabel_csv(features_path: Union[str, Path], labels_path: Union[str, Path]) -> MultiLabelDataset:
    """
    Load features and labels; labels in {0, 1} are mapped to {-1, +1}.

    Raises:
        RowCountMismatchError: If the two files have different row counts
        NonBinaryLabelError: If a label is not in {-1, 0, +1}
        ParseError: If a value is not numeric
    """
    X = _read_matrix(Path(features_path))
    Y = _read_matrix(Path(labels_path))
    if X.shape[0] != Y.shape[0]:
        raise RowCountMismatchError(X.shape[0], Y.shape[0])

    allowed = np.isin(Y, (-1, 0, 1))
    if not allowed.all():
        row, column = np.argwhere(~allowed)[0]
        raise NonBinaryLabelError(float(Y[row, column]), int(row), int(column))

    dataset = MultiLabelDataset(X=X, Y=np.where(Y == 0, -1, Y))
    logger.info(
        f"Loaded multi-label data: N={dataset.n_instances}, D={dataset.n_features}, L={dataset.n_labels}"
    )
    return dataset


def save_labels_csv(Y: np.ndarray, path: Union[str, Path]) -> Path:
    """Write a {-1, +1} label matrix as comma-separated integers."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(np.asarray(Y, dtype=np.int64)).to_csv(path, header=False, index=False, lineterminator="\n")
    logger.info(f"Saved {np.shape(Y)[0]} label rows to {path}")
    return path
