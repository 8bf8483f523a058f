"""
Tests for train/test protocols.
"""

import numpy as np
import pytest
from hypothesis import given, strategies as st, settings, HealthCheck

from mflab.models.rating_matrix import SparseRatingMatrix
from mflab.schemas.experiment import SplitKind, SplitSpec
from mflab.services.exceptions import TooFewInstancesError
from mflab.services.splits import (
    RatingSplit,
    StrongSplit,
    kfold_indices,
    kfold_splits,
    random_holdout,
    split,
    strong_split,
    weak_split,
)


def entry_set(Y: SparseRatingMatrix):
    return set(Y.entries())


@pytest.mark.unit
class TestWeakSplit:
    """One held-out rating per user."""

    def test_one_test_rating_per_user(self, low_rank_ratings):
        parts = weak_split(low_rank_ratings, seed=0)
        assert parts.test.user_counts().tolist() == [1] * 12

    def test_partition(self, low_rank_ratings):
        parts = weak_split(low_rank_ratings, seed=0)
        train, test = entry_set(parts.train), entry_set(parts.test)
        assert not train & test
        assert train | test == entry_set(low_rank_ratings)

    def test_single_rating_users_stay_in_training(self):
        Y = SparseRatingMatrix.from_dense(np.array([[3, 0, 0], [1, 2, 0]]), rating_levels=5)
        parts = weak_split(Y, seed=1)
        assert parts.test.user_counts().tolist() == [0, 1]
        assert parts.train.contains(0, 0)

    def test_deterministic(self, low_rank_ratings):
        assert weak_split(low_rank_ratings, 5).test == weak_split(low_rank_ratings, 5).test


@pytest.mark.unit
class TestStrongSplit:
    """Held-out users with tweak and held-out parts."""

    def test_parts_are_disjoint_and_complete(self, low_rank_ratings):
        parts = strong_split(low_rank_ratings, held_user_fraction=0.25, seed=3)
        base, tweak, held = (entry_set(p) for p in (parts.base_train, parts.novel_tweak, parts.novel_heldout))

        assert not base & tweak and not base & held and not tweak & held
        assert base | tweak | held == entry_set(low_rank_ratings)

    def test_held_users(self, low_rank_ratings):
        parts = strong_split(low_rank_ratings, held_user_fraction=0.25, seed=3)
        assert parts.held_users.size == 3
        assert not np.isin(parts.base_train.users, parts.held_users).any()
        assert parts.novel_heldout.user_counts()[parts.held_users].tolist() == [1, 1, 1]


@pytest.mark.unit
class TestRandomHoldout:
    def test_fraction(self, low_rank_ratings):
        parts = random_holdout(low_rank_ratings, test_fraction=0.2, seed=0)
        assert len(parts.test) == round(0.2 * len(low_rank_ratings))
        assert len(parts.train) + len(parts.test) == len(low_rank_ratings)

    def test_keeps_one_entry_each_side(self):
        Y = SparseRatingMatrix.from_dense(np.array([[1, 2]]), rating_levels=2)
        parts = random_holdout(Y, test_fraction=0.01, seed=0)
        assert (len(parts.train), len(parts.test)) == (1, 1)


@pytest.mark.unit
class TestKFold:
    """k disjoint folds."""

    def test_folds_partition_entries(self, low_rank_ratings):
        folds = kfold_splits(low_rank_ratings, k=4, seed=2)
        tests = [entry_set(part.test) for part in folds]

        assert len(folds) == 4
        assert set().union(*tests) == entry_set(low_rank_ratings)
        assert sum(len(t) for t in tests) == len(low_rank_ratings)

    @given(n=st.integers(min_value=2, max_value=60), k=st.integers(min_value=2, max_value=10), seed=st.integers(0, 1000))
    @settings(suppress_health_check=[HealthCheck.too_slow], deadline=2000)
    def test_index_folds_near_equal(self, n, k, seed):
        if n < k:
            with pytest.raises(TooFewInstancesError):
                kfold_indices(n, k, seed)
            return
        folds = kfold_indices(n, k, seed)
        sizes = [fold.size for fold in folds]
        assert max(sizes) - min(sizes) <= 1, f"Unbalanced folds {sizes}"
        assert np.array_equal(np.sort(np.concatenate(folds)), np.arange(n))


@pytest.mark.unit
@pytest.mark.parametrize(
    "kind, expected",
    [
        (SplitKind.WEAK, RatingSplit),
        (SplitKind.STRONG, StrongSplit),
        (SplitKind.RANDOM_HOLDOUT, RatingSplit),
        (SplitKind.KFOLD, list),
    ],
)
def test_split_dispatch(low_rank_ratings, kind, expected):
    result = split(low_rank_ratings, SplitSpec(kind=kind, k=3, seed=0))
    assert isinstance(result, expected), f"Expected {expected.__name__}, got {type(result).__name__}"
