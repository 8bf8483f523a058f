"""
Train/test protocols over observed ratings.

Every split partitions the observed entries: no entry is lost or duplicated.
All splits are deterministic in their seed.
"""

import logging
from typing import List, NamedTuple, Optional, Union

import numpy as np
from sklearn.model_selection import KFold

from mflab.models.rating_matrix import SparseRatingMatrix
from mflab.schemas.experiment import SplitKind, SplitSpec
from mflab.services.exceptions import TooFewInstancesError

logger = logging.getLogger(__name__)


class RatingSplit(NamedTuple):
    """Training and test entries of one split, both with the source dimensions."""
    train: SparseRatingMatrix
    test: SparseRatingMatrix


class StrongSplit(NamedTuple):
    """
    Strong-generalization split.

    `base_train` holds every rating of the users that are not held out.
    For each held user, one rating goes to `novel_heldout` (if the user has at
    least two) and the rest to `novel_tweak`, which is used to fold the user in.
    """
    base_train: SparseRatingMatrix
    novel_tweak: SparseRatingMatrix
    novel_heldout: SparseRatingMatrix
    held_users: np.ndarray


def one_per_user(Y: SparseRatingMatrix, rng: np.random.Generator, users: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Positions of one randomly chosen entry per user with at least two ratings.

    Args:
        Y: Source ratings
        rng: Random generator
        users: Restrict the choice to these users (all users when omitted)

    Returns:
        Sorted entry positions
    """
    keys = rng.random(len(Y))
    order = np.lexsort((keys, Y.users))
    sorted_users = Y.users[order]
    first = np.ones(order.size, dtype=bool)
    first[1:] = sorted_users[1:] != sorted_users[:-1]

    counts = Y.user_counts()
    eligible = counts[sorted_users] >= 2
    if users is not None:
        eligible &= np.isin(sorted_users, users)
    return np.sort(order[first & eligible])


def _complement(n: int, positions: np.ndarray) -> np.ndarray:
    keep = np.ones(n, dtype=bool)
    keep[positions] = False
    return np.flatnonzero(keep)


def weak_split(Y: SparseRatingMatrix, seed: int) -> RatingSplit:
    """Hold out one rating per user; users with a single rating keep it for training."""
    rng = np.random.default_rng(seed)
    test = one_per_user(Y, rng)
    logger.debug(f"Weak split: {test.size} held-out ratings from {len(Y)} entries")
    return RatingSplit(train=Y.subset(_complement(len(Y), test)), test=Y.subset(test))


def strong_split(Y: SparseRatingMatrix, held_user_fraction: float, seed: int) -> StrongSplit:
    """Hold out a fraction of users entirely; see StrongSplit."""
    rng = np.random.default_rng(seed)
    active = np.flatnonzero(Y.user_counts() > 0)
    n_held = min(active.size, max(1, int(round(held_user_fraction * active.size))))
    held_users = np.sort(rng.choice(active, size=n_held, replace=False)) if active.size else active

    is_held = np.isin(Y.users, held_users)
    heldout = one_per_user(Y, rng, users=held_users)
    tweak_mask = is_held.copy()
    tweak_mask[heldout] = False

    logger.debug(
        f"Strong split: {held_users.size} held users, {heldout.size} held-out ratings, "
        f"{int(tweak_mask.sum())} tweak ratings"
    )
    return StrongSplit(
        base_train=Y.subset(np.flatnonzero(~is_held)),
        novel_tweak=Y.subset(np.flatnonzero(tweak_mask)),
        novel_heldout=Y.subset(heldout),
        held_users=held_users,
    )


def random_holdout(Y: SparseRatingMatrix, test_fraction: float, seed: int) -> RatingSplit:
    """Uniform sample of entries without replacement as the test set."""
    rng = np.random.default_rng(seed)
    n = len(Y)
    n_test = int(round(test_fraction * n))
    if n >= 2:
        n_test = min(max(n_test, 1), n - 1)
    test = np.sort(rng.permutation(n)[:n_test])
    return RatingSplit(train=Y.subset(_complement(n, test)), test=Y.subset(test))


def kfold_indices(n: int, k: int, seed: int) -> List[np.ndarray]:
    """
    Test-index arrays of k disjoint, near-equal folds over range(n).

    Raises:
        TooFewInstancesError: If n < k
    """
    if n < k:
        raise TooFewInstancesError(n, k)
    splitter = KFold(n_splits=k, shuffle=True, random_state=seed)
    return [np.sort(test) for _, test in splitter.split(np.zeros((n, 1)))]


def kfold_splits(Y: SparseRatingMatrix, k: int, seed: int) -> List[RatingSplit]:
    """k train/test pairs whose test parts partition the observed entries."""
    return [
        RatingSplit(train=Y.subset(_complement(len(Y), test)), test=Y.subset(test))
        for test in kfold_indices(len(Y), k, seed)
    ]


def split(
    Y: SparseRatingMatrix,
    spec: SplitSpec,
) -> Union[RatingSplit, StrongSplit, List[RatingSplit]]:
    """Dispatch on the split kind."""
    if spec.kind == SplitKind.WEAK:
        return weak_split(Y, spec.seed)
    if spec.kind == SplitKind.STRONG:
        return strong_split(Y, spec.held_user_fraction, spec.seed)
    if spec.kind == SplitKind.RANDOM_HOLDOUT:
        return random_holdout(Y, spec.test_fraction, spec.seed)
    return kfold_splits(Y, spec.k, spec.seed)
