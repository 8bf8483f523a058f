"""
Tests for proximal maximum-margin matrix factorization.
"""

import numpy as np
import pytest

from mflab.models.factors import FactorModel, ProximalThresholds
from mflab.models.rating_matrix import SparseRatingMatrix
from mflab.schemas.train import TrainConfig
from mflab.services.losses import BinaryLossKind
from mflab.services.pmmmf import (
    compute_thresholds,
    fallback_rating,
    pmmmf_objective_grad,
    predict_pmmmf,
    train_pmmmf,
    weighted_cuts,
)

SMOOTH_LOSSES = (BinaryLossKind.SMOOTH_HINGE, BinaryLossKind.LOGISTIC, BinaryLossKind.MODIFIED_SQUARE)


@pytest.fixture
def small_ratings() -> SparseRatingMatrix:
    return SparseRatingMatrix.from_dense(
        np.array([[1, 2, 0, 3], [3, 0, 3, 1], [0, 4, 1, 4], [2, 2, 2, 0]]),
        rating_levels=4,
    )


@pytest.mark.unit
class TestThresholds:
    """Closed-form class means."""

    def test_class_means_and_counts(self):
        Y = SparseRatingMatrix.from_dense(np.array([[1, 1, 3]]), rating_levels=3)
        U = np.array([[1.0]])
        V = np.array([[0.2], [0.4], [2.0]])
        thresholds = compute_thresholds(U, V, Y)

        assert thresholds.counts.tolist() == [[2, 0, 1]]
        assert thresholds.values[0, 0] == pytest.approx(0.3)
        assert np.isnan(thresholds.values[0, 1]), "Unused rating must have no threshold"
        assert thresholds.values[0, 2] == pytest.approx(2.0)


@pytest.mark.unit
class TestWeightedCuts:
    """Cut placement between neighbouring thresholds."""

    def test_equal_counts_give_midpoints(self):
        labels, cuts = weighted_cuts(np.array([-1.0, 0.0, 1.0]), np.array([2, 2, 2]))
        assert labels.tolist() == [1, 2, 3]
        assert cuts.tolist() == pytest.approx([-0.5, 0.5])

    def test_counts_weight_the_cut(self):
        """A cut moves away from the larger class: 0 + 3/4 (1 - 0)."""
        _, cuts = weighted_cuts(np.array([0.0, 1.0]), np.array([3, 1]))
        assert cuts.tolist() == pytest.approx([0.75])

    def test_undefined_ratings_skipped(self):
        labels, cuts = weighted_cuts(np.array([0.0, np.nan, 2.0]), np.array([1, 0, 1]))
        assert labels.tolist() == [1, 3]
        assert cuts.tolist() == pytest.approx([1.0])

    def test_thresholds_sorted_before_cutting(self):
        """Labels stay in rating order; the cut uses the sorted threshold values."""
        labels, cuts = weighted_cuts(np.array([1.0, 0.0]), np.array([1, 1]))
        assert labels.tolist() == [1, 2]
        assert cuts.tolist() == pytest.approx([0.5])


@pytest.mark.unit
class TestPredict:
    def test_prediction_between_cuts(self):
        """x = 0.2 lies between cuts -0.5 and 0.5 and takes the middle rating."""
        model = FactorModel(U=np.array([[1.0]]), V=np.array([[0.2], [-0.9], [0.9]]))
        thresholds = ProximalThresholds(values=np.array([[-1.0, 0.0, 1.0]]), counts=np.array([[1, 1, 1]]))
        assert predict_pmmmf(model, thresholds).tolist() == [[2, 1, 3]]

    def test_only_defined_ratings_predicted(self):
        """A user who never rated 2 is never predicted 2."""
        model = FactorModel(U=np.array([[1.0]]), V=np.array([[0.1], [0.4], [0.9]]))
        thresholds = ProximalThresholds(values=np.array([[0.0, np.nan, 1.0]]), counts=np.array([[1, 0, 1]]))
        assert predict_pmmmf(model, thresholds).tolist() == [[1, 1, 3]]

    def test_above_every_cut_takes_highest_used_rating(self):
        """Past the last cut the user's largest used rating wins, not R."""
        model = FactorModel(U=np.array([[1.0]]), V=np.array([[5.0]]))
        thresholds = ProximalThresholds(
            values=np.array([[0.0, 1.0, np.nan, np.nan, np.nan]]),
            counts=np.array([[2, 2, 0, 0, 0]]),
        )
        assert predict_pmmmf(model, thresholds).tolist() == [[2]]

    def test_full_user_reaches_top_rating(self):
        model = FactorModel(U=np.array([[1.0]]), V=np.array([[9.0], [-9.0]]))
        thresholds = ProximalThresholds(
            values=np.array([[-2.0, -1.0, 0.0, 1.0, 2.0]]),
            counts=np.array([[1, 1, 1, 1, 1]]),
        )
        assert predict_pmmmf(model, thresholds).tolist() == [[5, 1]]

    def test_regions_map_onto_sparse_ratings(self):
        """Ratings {1, 4, 5} with cuts 0.5 and 1.5: the middle region is rating 4."""
        model = FactorModel(U=np.array([[1.0]]), V=np.array([[-3.0], [0.5], [1.2], [1.5], [3.0]]))
        thresholds = ProximalThresholds(
            values=np.array([[0.0, np.nan, np.nan, 1.0, 2.0]]),
            counts=np.array([[1, 0, 0, 1, 1]]),
        )
        assert predict_pmmmf(model, thresholds).tolist() == [[1, 1, 4, 4, 5]]

    def test_user_without_ratings_gets_fallback(self):
        model = FactorModel(U=np.array([[1.0], [1.0]]), V=np.array([[0.0], [5.0]]))
        thresholds = ProximalThresholds(
            values=np.array([[0.0, np.nan, 1.0], [np.nan, np.nan, np.nan]]),
            counts=np.array([[1, 0, 4], [0, 0, 0]]),
        )
        assert fallback_rating(thresholds) == 3
        assert predict_pmmmf(model, thresholds)[1].tolist() == [3, 3]

    def test_fallback_with_no_ratings_at_all(self):
        thresholds = ProximalThresholds(values=np.full((1, 5), np.nan), counts=np.zeros((1, 5)))
        assert fallback_rating(thresholds) == 3


@pytest.mark.unit
class TestObjective:
    def test_gradient_matches_finite_difference(self, small_ratings, numeric_gradient):
        """The gradient includes the movement of each class mean."""
        rng = np.random.default_rng(5)
        U = rng.normal(size=(4, 2))
        V = rng.normal(size=(4, 2))
        _, gU, gV = pmmmf_objective_grad(U, V, small_ratings, lam=0.2)

        numeric_U = numeric_gradient(lambda u: pmmmf_objective_grad(u, V, small_ratings, 0.2)[0], U)
        numeric_V = numeric_gradient(lambda v: pmmmf_objective_grad(U, v, small_ratings, 0.2)[0], V)

        assert np.allclose(gU, numeric_U, atol=1e-5), f"Max U gradient error {np.abs(gU - numeric_U).max()}"
        assert np.allclose(gV, numeric_V, atol=1e-5), f"Max V gradient error {np.abs(gV - numeric_V).max()}"

    @pytest.mark.parametrize("seed", range(50))
    def test_gradient_sweep(self, seed, random_ratings, numeric_gradient, relative_error):
        """Random shapes, penalties and losses, including users with a single class."""
        Y = random_ratings(seed)
        rng = np.random.default_rng(3000 + seed)
        d = int(rng.integers(1, 4))
        scale = rng.uniform(0.3, 1.5)
        U = rng.normal(scale=scale, size=(Y.n_users, d))
        V = rng.normal(scale=scale, size=(Y.n_items, d))
        lam = float(rng.choice([0.0, 0.1, 1.0, 3.0]))
        loss = SMOOTH_LOSSES[seed % 3]

        _, gU, gV = pmmmf_objective_grad(U, V, Y, lam, loss)
        numeric_U = numeric_gradient(lambda u: pmmmf_objective_grad(u, V, Y, lam, loss)[0], U)
        numeric_V = numeric_gradient(lambda v: pmmmf_objective_grad(U, v, Y, lam, loss)[0], V)

        error = relative_error((gU, numeric_U), (gV, numeric_V))
        assert error <= 1e-4, f"Seed {seed} ({loss.value}, lam={lam}): relative error {error:.2e}"

    @pytest.mark.parametrize("seed", range(10))
    def test_thresholds_are_stationary(self, seed, random_ratings):
        """Within each class the deviations from its threshold sum to zero."""
        Y = random_ratings(seed)
        rng = np.random.default_rng(seed)
        U, V = rng.normal(size=(Y.n_users, 3)), rng.normal(size=(Y.n_items, 3))
        thresholds = compute_thresholds(U, V, Y)

        own = Y.ratings.astype(np.int64) - 1
        deviations = np.sum(U[Y.users] * V[Y.items], axis=1) - thresholds.values[Y.users, own]
        classes = Y.users * Y.rating_levels + own
        sums = np.bincount(classes, weights=deviations)

        assert np.abs(sums).max() <= 1e-10, f"Largest class deviation sum {np.abs(sums).max():.2e}"

    @pytest.mark.parametrize("shift", [-2.5, 0.7, 10.0])
    def test_constant_shift_moves_thresholds_only(self, small_ratings, shift):
        """Adding c to every prediction shifts each threshold by c and leaves the loss unchanged."""
        rng = np.random.default_rng(9)
        U, V = rng.normal(size=(4, 2)), rng.normal(size=(4, 2))
        U_shifted = np.column_stack([U, np.ones(4)])
        V_shifted = np.column_stack([V, np.full(4, shift)])

        J, gU, gV = pmmmf_objective_grad(U, V, small_ratings, lam=0.0)
        J_shifted, gU_shifted, gV_shifted = pmmmf_objective_grad(U_shifted, V_shifted, small_ratings, lam=0.0)
        base = compute_thresholds(U, V, small_ratings)
        moved = compute_thresholds(U_shifted, V_shifted, small_ratings)

        assert J_shifted == pytest.approx(J, rel=1e-10), f"Shift {shift}: {J_shifted} vs {J}"
        assert np.allclose(gU_shifted[:, :2], gU) and np.allclose(gV_shifted[:, :2], gV)
        assert np.allclose(moved.values, base.values + shift, equal_nan=True)
        assert np.array_equal(moved.counts, base.counts)

    def test_single_class_user_pays_only_proximity(self):
        """With no other class defined there is no margin term."""
        Y = SparseRatingMatrix.from_dense(np.array([[2, 2]]), rating_levels=3)
        J, _, _ = pmmmf_objective_grad(np.array([[1.0]]), np.array([[0.5], [-0.5]]), Y, lam=0.0)
        # Both items share the class mean 0, each off by 0.5
        assert J == pytest.approx(0.5)


@pytest.mark.integration
class TestTraining:
    def test_training_returns_consistent_thresholds(self, low_rank_ratings):
        cfg = TrainConfig(latent_dim=2, lam=0.5, max_iters=80, seed=3)
        model, thresholds = train_pmmmf(low_rank_ratings, cfg)

        recomputed = compute_thresholds(model.U, model.V, low_rank_ratings)
        assert np.allclose(thresholds.values, recomputed.values, equal_nan=True)
        assert np.array_equal(thresholds.counts, recomputed.counts)

        completed = predict_pmmmf(model, thresholds, source=low_rank_ratings)
        assert completed.min() >= 1 and completed.max() <= 5
