"""
Rating file access.

Files hold one observed rating per line, "user<sep>item<sep>rating[<sep>timestamp]",
with 1-based ids (MovieLens u.data layout). The timestamp column is ignored.
"""

import logging
from pathlib import Path
from typing import Optional, Union

import numpy as np
import pandas as pd

from mflab.models.rating_matrix import SparseRatingMatrix
from mflab.services.exceptions import ParseError, RatingOutOfRangeError

logger = logging.getLogger(__name__)

EACHMOVIE_LEVELS = 6
COLUMNS = ["user", "item", "rating"]


def _read_frame(path: Path, sep: str) -> pd.DataFrame:
    try:
        frame = pd.read_csv(
            path,
            sep=sep,
            header=None,
            dtype=str,
            skip_blank_lines=False,
            engine="python" if len(sep) > 1 else "c",
        )
    except pd.errors.EmptyDataError:
        return pd.DataFrame(columns=COLUMNS)
    except pd.errors.ParserError as e:
        raise ParseError(None, str(e), str(path)) from e

    # Keep file line numbers: index i is line i + 1
    frame = frame[~frame.isna().all(axis=1)]
    if frame.shape[1] < 3:
        first = int(frame.index[0]) + 1 if len(frame) else None
        raise ParseError(first, f"expected at least 3 fields, found {frame.shape[1]}", str(path))
    frame = frame.iloc[:, :3]
    frame.columns = COLUMNS
    return frame


def _numeric_column(frame: pd.DataFrame, column: str, path: Path, integral: bool) -> np.ndarray:
    values = pd.to_numeric(frame[column].str.strip(), errors="coerce")
    bad = values.isna()
    if integral:
        bad |= values != values.round()
    if bad.any():
        line = int(bad.idxmax()) + 1
        raw = frame[column].loc[bad.idxmax()]
        raise ParseError(line, f"{column} '{raw}' is not a valid {'integer' if integral else 'number'}", str(path))
    return values.to_numpy(dtype=np.float64)


def _eachmovie_levels(scores: np.ndarray, frame: pd.DataFrame, path: Path) -> np.ndarray:
    """{0, 0.2, ..., 1} -> {1..6}."""
    scaled = scores * (EACHMOVIE_LEVELS - 1)
    levels = np.rint(scaled)
    bad = (np.abs(scaled - levels) > 1e-6) | (levels < 0) | (levels > EACHMOVIE_LEVELS - 1)
    if bad.any():
        position = int(np.argmax(bad))
        raise ParseError(int(frame.index[position]) + 1, f"EachMovie score {scores[position]} not in {{0, 0.2, ..., 1}}", str(path))
    return levels + 1


def load_ratings_tsv(
    path: Union[str, Path],
    rating_levels: Optional[int] = None,
    sep: str = "\t",
    eachmovie: bool = False,
    n_users: Optional[int] = None,
    n_items: Optional[int] = None,
) -> SparseRatingMatrix:
    """
    Load a rating file into a validated SparseRatingMatrix.

    Args:
        path: Rating file
        rating_levels: R; inferred as the largest rating when omitted (6 for EachMovie)
        sep: Field separator, e.g. "::" for MovieLens-1M
        eachmovie: Map EachMovie scores {0, 0.2, ..., 1} to {1..6}
        n_users: Row count; inferred from the largest user id when omitted
        n_items: Column count; inferred from the largest item id when omitted

    Raises:
        FileNotFoundError: If the file does not exist
        ParseError: If a line cannot be parsed (reports its line number)
        RatingOutOfRangeError: If a rating exceeds the given R
        DuplicateEntryError: If a (user, item) pair repeats
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Ratings file not found: {path}")

    frame = _read_frame(path, sep)
    users = _numeric_column(frame, "user", path, integral=True).astype(np.int64)
    items = _numeric_column(frame, "item", path, integral=True).astype(np.int64)

    if eachmovie:
        ratings = _eachmovie_levels(_numeric_column(frame, "rating", path, integral=False), frame, path)
        rating_levels = rating_levels or EACHMOVIE_LEVELS
    else:
        ratings = _numeric_column(frame, "rating", path, integral=True)

    for name, ids in (("user", users), ("item", items)):
        if ids.size and ids.min() < 1:
            line = int(frame.index[int(np.argmin(ids))]) + 1
            raise ParseError(line, f"{name} id {int(ids.min())} is below 1", str(path))

    if rating_levels is None:
        rating_levels = max(int(ratings.max()) if ratings.size else 2, 2)
    elif ratings.size and ratings.max() > rating_levels:
        raise RatingOutOfRangeError(float(ratings.max()), rating_levels)

    matrix = SparseRatingMatrix(
        n_users=n_users if n_users is not None else (int(users.max()) if users.size else 0),
        n_items=n_items if n_items is not None else (int(items.max()) if items.size else 0),
        rating_levels=rating_levels,
        users=users - 1,
        items=items - 1,
        ratings=ratings,
    )
    logger.info(
        f"Loaded {len(matrix)} ratings from {path}: {matrix.n_users} users, {matrix.n_items} items, "
        f"R={matrix.rating_levels}"
    )
    return matrix


def save_ratings_tsv(Y: SparseRatingMatrix, path: Union[str, Path], sep: str = "\t") -> Path:
    """Write observed entries as 1-based "user item rating" lines ordered by (user, item)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    order = np.lexsort((Y.items, Y.users))
    frame = pd.DataFrame({
        "user": Y.users[order] + 1,
        "item": Y.items[order] + 1,
        "rating": Y.ratings[order].astype(np.int64),
    })
    frame.to_csv(path, sep=sep, header=False, index=False, lineterminator="\n")
    logger.info(f"Saved {len(Y)} ratings to {path}")
    return path


def save_predictions_tsv(predictions: np.ndarray, path: Union[str, Path], sep: str = "\t") -> Path:
    """Write every entry of a dense prediction matrix as 1-based "user item value" lines in row-major order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    predictions = np.asarray(predictions)
    users, items = np.indices(predictions.shape)
    frame = pd.DataFrame({
        "user": users.ravel() + 1,
        "item": items.ravel() + 1,
        "value": predictions.ravel(),
    })
    frame.to_csv(path, sep=sep, header=False, index=False, lineterminator="\n")
    logger.info(f"Saved {predictions.size} predictions to {path}")
    return path
