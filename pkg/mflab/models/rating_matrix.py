"""
Partially observed ordinal rating matrices and sign matrices.
"""

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np

from mflab.services.exceptions import (
    ConfigurationError,
    DimensionMismatchError,
    DuplicateEntryError,
    IndexOutOfRangeError,
    NonBinaryLabelError,
    ParseError,
    RatingOutOfRangeError,
)


@dataclass(frozen=True, eq=False)
class SparseRatingMatrix:
    """
    N x M ordinal rating matrix holding only its observed entries.

    Entries are stored as three parallel arrays (0-based user, 0-based item,
    rating in 1..R). The observed set is indexed by linear position so that
    membership checks are dictionary lookups.
    """

    n_users: int
    n_items: int
    rating_levels: int
    users: np.ndarray
    items: np.ndarray
    ratings: np.ndarray
    _positions: Dict[int, int] = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        users = np.ascontiguousarray(self.users, dtype=np.int64)
        items = np.ascontiguousarray(self.items, dtype=np.int64)
        ratings = np.ascontiguousarray(self.ratings)

        if not (users.shape == items.shape == ratings.shape) or users.ndim != 1:
            raise DimensionMismatchError(
                "three equal-length 1-D arrays",
                f"users{users.shape}, items{items.shape}, ratings{ratings.shape}",
            )
        if self.rating_levels < 2:
            raise ConfigurationError(f"rating_levels must be at least 2, got {self.rating_levels}")

        if users.size:
            if users.min() < 0 or users.max() >= self.n_users:
                bad = int(users[(users < 0) | (users >= self.n_users)][0])
                raise IndexOutOfRangeError("user", bad, self.n_users)
            if items.min() < 0 or items.max() >= self.n_items:
                bad = int(items[(items < 0) | (items >= self.n_items)][0])
                raise IndexOutOfRangeError("item", bad, self.n_items)
            outside = (ratings < 1) | (ratings > self.rating_levels) | (ratings != np.round(ratings))
            if outside.any():
                raise RatingOutOfRangeError(ratings[outside][0].item(), self.rating_levels)

        ratings = ratings.astype(np.uint8)
        linear = users * self.n_items + items
        positions: Dict[int, int] = {}
        for position, key in enumerate(linear.tolist()):
            if key in positions:
                raise DuplicateEntryError(key // self.n_items, key % self.n_items)
            positions[key] = position

        for array in (users, items, ratings):
            array.setflags(write=False)
        object.__setattr__(self, "users", users)
        object.__setattr__(self, "items", items)
        object.__setattr__(self, "ratings", ratings)
        object.__setattr__(self, "_positions", positions)

    def __len__(self) -> int:
        return int(self.users.size)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SparseRatingMatrix):
            return NotImplemented
        if (self.shape, self.rating_levels, len(self)) != (other.shape, other.rating_levels, len(other)):
            return False
        mine = np.argsort(self.users * self.n_items + self.items)
        theirs = np.argsort(other.users * other.n_items + other.items)
        return (
            np.array_equal(self.users[mine], other.users[theirs])
            and np.array_equal(self.items[mine], other.items[theirs])
            and np.array_equal(self.ratings[mine], other.ratings[theirs])
        )

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.n_users, self.n_items)

    def contains(self, user: int, item: int) -> bool:
        """Whether (user, item) is in the observed set."""
        return (user * self.n_items + item) in self._positions

    def rating_at(self, user: int, item: int) -> Optional[int]:
        position = self._positions.get(user * self.n_items + item)
        return None if position is None else int(self.ratings[position])

    def observed_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        mask[self.users, self.items] = True
        return mask

    def to_dense(self, fill: int = 0) -> np.ndarray:
        """Dense integer matrix with `fill` at unobserved positions."""
        dense = np.full(self.shape, fill, dtype=np.int64)
        dense[self.users, self.items] = self.ratings
        return dense

    def entries(self) -> List[Tuple[int, int, int]]:
        """Observed entries as 0-based (user, item, rating) triplets."""
        return list(zip(self.users.tolist(), self.items.tolist(), self.ratings.tolist()))

    def user_counts(self) -> np.ndarray:
        return np.bincount(self.users, minlength=self.n_users)

    def subset(self, positions: np.ndarray) -> "SparseRatingMatrix":
        """New matrix with the same shape keeping only the given entry positions."""
        positions = np.asarray(positions, dtype=np.int64)
        return SparseRatingMatrix(
            n_users=self.n_users,
            n_items=self.n_items,
            rating_levels=self.rating_levels,
            users=self.users[positions],
            items=self.items[positions],
            ratings=self.ratings[positions],
        )

    @classmethod
    def from_dense(cls, dense: np.ndarray, rating_levels: int) -> "SparseRatingMatrix":
        """Build from a dense matrix where 0 marks an unobserved entry."""
        dense = np.asarray(dense)
        users, items = np.nonzero(dense)
        return cls(
            n_users=dense.shape[0],
            n_items=dense.shape[1],
            rating_levels=rating_levels,
            users=users,
            items=items,
            ratings=dense[users, items],
        )


def build_rating_matrix(
    triplets: Iterable[Tuple[int, int, float]],
    rating_levels: int,
    n_users: Optional[int] = None,
    n_items: Optional[int] = None,
) -> SparseRatingMatrix:
    """
    Build a validated rating matrix from 1-based (user, item, rating) triplets.

    Args:
        triplets: Observed ratings using the 1-based file convention
        rating_levels: Number of rating levels R
        n_users: Row count; inferred from the largest user id when omitted
        n_items: Column count; inferred from the largest item id when omitted

    Returns:
        SparseRatingMatrix with 0-based indices

    Raises:
        DuplicateEntryError: If a (user, item) pair repeats
        RatingOutOfRangeError: If a rating is outside 1..R
        IndexOutOfRangeError: If an id is below 1 or beyond the given bounds
        ParseError: If a user or item id is not a whole number
    """
    rows = list(triplets)
    if rows:
        data = np.asarray(rows, dtype=np.float64).reshape(-1, 3)
    else:
        data = np.zeros((0, 3))

    for axis, column in (("user", 0), ("item", 1)):
        fractional = np.flatnonzero(data[:, column] != np.round(data[:, column]))
        if fractional.size:
            row = int(fractional[0])
            raise ParseError(row + 1, f"{axis} id {data[row, column]:g} is not an integer")

    users = data[:, 0].astype(np.int64) - 1
    items = data[:, 1].astype(np.int64) - 1
    if users.size and users.min() < 0:
        raise IndexOutOfRangeError("user", int(users.min()), n_users or 0)
    if items.size and items.min() < 0:
        raise IndexOutOfRangeError("item", int(items.min()), n_items or 0)

    if n_users is None:
        n_users = int(users.max()) + 1 if users.size else 0
    if n_items is None:
        n_items = int(items.max()) + 1 if items.size else 0

    return SparseRatingMatrix(
        n_users=n_users,
        n_items=n_items,
        rating_levels=rating_levels,
        users=users,
        items=items,
        ratings=data[:, 2],
    )


@dataclass(frozen=True, eq=False)
class SignMatrix:
    """Dense {-1, 0, +1} matrix; 0 marks an unobserved entry."""

    values: np.ndarray

    def __post_init__(self):
        raw = np.asarray(self.values)
        if raw.ndim != 2:
            raise DimensionMismatchError("2-D sign matrix", f"{raw.ndim}-D array")
        valid = np.isin(raw, (-1, 0, 1))
        if not valid.all():
            raise NonBinaryLabelError(raw[~valid][0].item())
        values = raw.astype(np.int8)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape

    @property
    def observed(self) -> np.ndarray:
        return self.values != 0

    def n_observed(self) -> int:
        return int(np.count_nonzero(self.values))
