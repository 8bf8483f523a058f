"""
Tests for bi-level and ordinal maximum-margin matrix factorization.
"""

import numpy as np
import pytest

from mflab.models.factors import FactorModel
from mflab.models.rating_matrix import SignMatrix, SparseRatingMatrix
from mflab.schemas.train import TrainConfig
from mflab.services.exceptions import DimensionMismatchError, NoObservedEntriesError
from mflab.services.losses import BinaryLossKind
from mflab.services.metrics import zero_one_error
from mflab.services.mmmf import (
    bmmmf_objective_grad,
    initial_thresholds,
    mmmf_objective_grad,
    ordinal_regions,
    predict_bilevel,
    predict_ordinal,
    train_bmmmf,
    train_mmmf,
)
from mflab.services.optimizer import uniform_init


@pytest.mark.unit
class TestBilevelObjective:
    """Objective value and gradient of the bi-level problem."""

    def test_loss_sum_without_regularization(self, bilevel_example):
        """
        Smooth hinge summed over the 29 observed entries.

        Adding up the two-decimal smooth hinge table instead gives about 1.62,
        because that table repeats its first column in place of the last one.
        """
        J, _, _ = bmmmf_objective_grad(bilevel_example.U, bilevel_example.V, bilevel_example.Y, lam=0.0)
        assert J == pytest.approx(1.56757, abs=1e-4), f"Expected 1.56757, got {J}"

    def test_regularization_adds_half_frobenius(self, bilevel_example):
        J, _, _ = bmmmf_objective_grad(bilevel_example.U, bilevel_example.V, bilevel_example.Y, lam=1.0)
        expected = 1.56757 + 0.5 * 16.332
        assert J == pytest.approx(expected, abs=1e-4), f"Expected {expected}, got {J}"

    @pytest.mark.parametrize("loss", [BinaryLossKind.SMOOTH_HINGE, BinaryLossKind.LOGISTIC, BinaryLossKind.MODIFIED_SQUARE])
    def test_gradient_matches_finite_difference(self, bilevel_example, numeric_gradient, loss):
        U, V, Y = bilevel_example.U, bilevel_example.V, bilevel_example.Y
        _, gU, gV = bmmmf_objective_grad(U, V, Y, lam=0.5, loss=loss)

        numeric_U = numeric_gradient(lambda u: bmmmf_objective_grad(u, V, Y, 0.5, loss)[0], U)
        numeric_V = numeric_gradient(lambda v: bmmmf_objective_grad(U, v, Y, 0.5, loss)[0], V)

        assert np.allclose(gU, numeric_U, atol=1e-5), f"Max U gradient error {np.abs(gU - numeric_U).max()}"
        assert np.allclose(gV, numeric_V, atol=1e-5), f"Max V gradient error {np.abs(gV - numeric_V).max()}"

    def test_shape_mismatch(self, bilevel_example):
        with pytest.raises(DimensionMismatchError):
            bmmmf_objective_grad(bilevel_example.U[:5], bilevel_example.V, bilevel_example.Y, lam=1.0)


@pytest.mark.unit
class TestPredictBilevel:
    """Sign completion at a cut."""

    def test_example_factors_fit_observed_signs(self, bilevel_example):
        model = FactorModel(U=bilevel_example.U, V=bilevel_example.V)
        predicted = predict_bilevel(model)

        assert zero_one_error(bilevel_example.Y, predicted) == 0.0
        assert predicted[2, 3] == 1, f"Expected +1 at (2, 3), got {predicted[2, 3]}"

    def test_cut_moves_decisions(self, bilevel_example):
        """X[2, 3] = 1.2058 falls below a cut of 1.3."""
        model = FactorModel(U=bilevel_example.U, V=bilevel_example.V)
        assert predict_bilevel(model, theta_cut=0.1)[2, 3] == 1
        assert predict_bilevel(model, theta_cut=1.3)[2, 3] == -1

    def test_observed_entries_copied(self):
        model = FactorModel(U=np.ones((2, 1)), V=np.ones((2, 1)))
        source = SignMatrix(np.array([[-1, 0], [0, 0]]))
        predicted = predict_bilevel(model, source=source)
        assert predicted.tolist() == [[-1, 1], [1, 1]]


@pytest.mark.unit
class TestOrdinalObjective:
    """All-threshold objective over U, V and theta."""

    @pytest.fixture
    def small(self):
        Y = SparseRatingMatrix.from_dense(np.array([[1, 0, 3], [4, 2, 0], [0, 4, 1], [2, 0, 0]]), rating_levels=4)
        rng = np.random.default_rng(3)
        return Y, rng.normal(size=(4, 2)), rng.normal(size=(3, 2)), np.sort(rng.normal(size=(4, 3)), axis=1)

    def test_gradient_matches_finite_difference(self, small, numeric_gradient):
        Y, U, V, theta = small
        _, gU, gV, g_theta = mmmf_objective_grad(U, V, theta, Y, lam=0.3)

        numeric_U = numeric_gradient(lambda u: mmmf_objective_grad(u, V, theta, Y, 0.3)[0], U)
        numeric_V = numeric_gradient(lambda v: mmmf_objective_grad(U, v, theta, Y, 0.3)[0], V)
        numeric_theta = numeric_gradient(lambda t: mmmf_objective_grad(U, V, t, Y, 0.3)[0], theta)

        assert np.allclose(gU, numeric_U, atol=1e-5)
        assert np.allclose(gV, numeric_V, atol=1e-5)
        assert np.allclose(g_theta, numeric_theta, atol=1e-5)

    def test_zero_factors(self, small):
        """With U = V = 0 every term is the smooth hinge of a threshold value."""
        Y, _, _, theta = small
        theta = np.zeros_like(theta)
        J, _, _, _ = mmmf_objective_grad(np.zeros((4, 2)), np.zeros((3, 2)), theta, Y, lam=1.0)
        # Each of the 7 ratings meets 3 thresholds at margin 0
        assert J == pytest.approx(7 * 3 * 0.5)

    def test_threshold_shape_checked(self, small):
        Y, U, V, _ = small
        with pytest.raises(DimensionMismatchError):
            mmmf_objective_grad(U, V, np.zeros((4, 4)), Y, lam=1.0)

    def test_initial_thresholds(self):
        theta = initial_thresholds(2, 5)
        assert theta.tolist() == [[-1.5, -0.5, 0.5, 1.5]] * 2


@pytest.mark.unit
class TestOrdinalPrediction:
    def test_regions(self):
        """theta_{r-1} <= x < theta_r gives rating r."""
        X = np.array([[-2.0, -1.0, 0.5, 1.0, 3.0]])
        ratings = ordinal_regions(X, np.array([[-1.0, 0.0, 1.0]]))
        assert ratings.tolist() == [[1, 2, 3, 4, 4]]

    def test_unsorted_thresholds_are_sorted(self):
        X = np.array([[0.5]])
        assert ordinal_regions(X, np.array([[1.0, -1.0, 0.0]])).tolist() == [[3]]

    def test_requires_thresholds(self):
        with pytest.raises(DimensionMismatchError):
            predict_ordinal(FactorModel(U=np.zeros((1, 1)), V=np.zeros((1, 1))))


SMOOTH_LOSSES = (BinaryLossKind.SMOOTH_HINGE, BinaryLossKind.LOGISTIC, BinaryLossKind.MODIFIED_SQUARE)


def _random_factors(rng: np.random.Generator, n_users: int, n_items: int):
    d = int(rng.integers(1, 4))
    scale = rng.uniform(0.3, 1.5)
    return rng.normal(scale=scale, size=(n_users, d)), rng.normal(scale=scale, size=(n_items, d))


@pytest.mark.unit
class TestGradientSweep:
    """Finite-difference checks over 50 random shapes, penalties and losses."""

    @pytest.mark.parametrize("seed", range(50))
    def test_bilevel_gradient(self, seed, numeric_gradient, relative_error):
        rng = np.random.default_rng(1000 + seed)
        n_users, n_items = (int(n) for n in rng.integers(2, 8, size=2))
        signs = rng.choice([-1, 0, 1], size=(n_users, n_items))
        signs[0, 0] = 1
        Y = SignMatrix(signs)
        U, V = _random_factors(rng, n_users, n_items)
        lam = float(rng.choice([0.0, 0.1, 1.0, 3.0]))
        loss = SMOOTH_LOSSES[seed % 3]

        _, gU, gV = bmmmf_objective_grad(U, V, Y, lam, loss)
        numeric_U = numeric_gradient(lambda u: bmmmf_objective_grad(u, V, Y, lam, loss)[0], U)
        numeric_V = numeric_gradient(lambda v: bmmmf_objective_grad(U, v, Y, lam, loss)[0], V)

        error = relative_error((gU, numeric_U), (gV, numeric_V))
        assert error <= 1e-4, f"Seed {seed} ({loss.value}, lam={lam}): relative error {error:.2e}"

    @pytest.mark.parametrize("seed", range(50))
    def test_ordinal_gradient(self, seed, random_ratings, numeric_gradient, relative_error):
        Y = random_ratings(seed)
        rng = np.random.default_rng(2000 + seed)
        U, V = _random_factors(rng, Y.n_users, Y.n_items)
        theta = np.sort(rng.normal(size=(Y.n_users, Y.rating_levels - 1)), axis=1)
        lam = float(rng.choice([0.0, 0.1, 1.0, 3.0]))
        loss = SMOOTH_LOSSES[seed % 3]

        _, gU, gV, g_theta = mmmf_objective_grad(U, V, theta, Y, lam, loss)
        numeric_U = numeric_gradient(lambda u: mmmf_objective_grad(u, V, theta, Y, lam, loss)[0], U)
        numeric_V = numeric_gradient(lambda v: mmmf_objective_grad(U, v, theta, Y, lam, loss)[0], V)
        numeric_theta = numeric_gradient(lambda t: mmmf_objective_grad(U, V, t, Y, lam, loss)[0], theta)

        error = relative_error((gU, numeric_U), (gV, numeric_V), (g_theta, numeric_theta))
        assert error <= 1e-4, f"Seed {seed} ({loss.value}, lam={lam}): relative error {error:.2e}"


@pytest.mark.unit
class TestStructuralProperties:
    """Relations between the bi-level and ordinal problems and their decision rules."""

    @pytest.mark.parametrize("seed", range(5))
    def test_two_levels_reduce_to_bilevel(self, seed):
        """With R = 2 and a zero threshold, rating 1 acts as -1 and rating 2 as +1."""
        rng = np.random.default_rng(seed)
        dense = rng.integers(0, 3, size=(5, 6))
        dense[0, 0] = 2
        Y = SparseRatingMatrix.from_dense(dense, rating_levels=2)
        signs = SignMatrix(np.where(dense == 2, 1, np.where(dense == 1, -1, 0)))
        U, V = rng.normal(size=(5, 2)), rng.normal(size=(6, 2))

        J, gU, gV, _ = mmmf_objective_grad(U, V, np.zeros((5, 1)), Y, lam=0.7)
        J_bilevel, gU_bilevel, gV_bilevel = bmmmf_objective_grad(U, V, signs, lam=0.7)

        assert J == pytest.approx(J_bilevel, rel=1e-12), f"Ordinal {J} vs bi-level {J_bilevel}"
        assert np.allclose(gU, gU_bilevel) and np.allclose(gV, gV_bilevel)

    @pytest.mark.parametrize("a, b", [(0.01, 1.0), (2.0, 3.0), (50.0, 0.5)])
    def test_bilevel_prediction_ignores_positive_scaling(self, bilevel_example, a, b):
        """At a zero cut only the sign of U_i V_j^T matters."""
        base = predict_bilevel(FactorModel(U=bilevel_example.U, V=bilevel_example.V))
        scaled = predict_bilevel(FactorModel(U=a * bilevel_example.U, V=b * bilevel_example.V))
        assert np.array_equal(base, scaled), f"Scaling by ({a}, {b}) changed {np.sum(base != scaled)} entries"

    @pytest.mark.parametrize("thresholds", [[-1.0, 0.0, 1.0], [-0.3, -0.3, 2.0], [0.5], [-2.0, -1.5, 0.0, 0.25, 3.0]])
    def test_regions_partition_the_line(self, thresholds):
        """Every x falls in exactly one region; regions are ordered and all are reached."""
        theta = np.array(thresholds)
        grid = np.union1d(np.linspace(-4.0, 4.0, 801), theta)
        ratings = ordinal_regions(grid[None, :], theta[None, :])[0]

        lower = np.concatenate([[-np.inf], theta])
        upper = np.concatenate([theta, [np.inf]])
        membership = (grid[:, None] >= lower[None, :]) & (grid[:, None] < upper[None, :])
        # Tied thresholds leave an empty region, so count non-empty ones only
        reachable = np.flatnonzero(lower < upper) + 1

        assert np.all(membership.sum(axis=1) == 1), "Each x must lie in exactly one region"
        assert np.array_equal(ratings, membership.argmax(axis=1) + 1)
        assert np.all(np.diff(ratings) >= 0), "Ratings must not decrease as x grows"
        assert np.array_equal(np.unique(ratings), reachable), f"Reached {np.unique(ratings)}, expected {reachable}"


@pytest.mark.integration
class TestTraining:
    """End-to-end fits on small matrices."""

    def test_bmmmf_lowers_objective(self, bilevel_example):
        Y = bilevel_example.Y
        cfg = TrainConfig(latent_dim=2, lam=0.1, max_iters=300, seed=4)
        rng = np.random.default_rng(cfg.seed)
        start = bmmmf_objective_grad(uniform_init(rng, (7, 2), 2), uniform_init(rng, (7, 2), 2), Y, cfg.lam)[0]

        model = train_bmmmf(Y, cfg)
        final = bmmmf_objective_grad(model.U, model.V, Y, cfg.lam)[0]

        assert final < start, f"Expected objective below {start}, got {final}"
        assert model.U.shape == (7, 2) and model.V.shape == (7, 2)

    def test_bmmmf_deterministic_in_seed(self, bilevel_example):
        cfg = TrainConfig(latent_dim=2, lam=0.5, max_iters=50, seed=9)
        first = train_bmmmf(bilevel_example.Y, cfg)
        second = train_bmmmf(bilevel_example.Y, cfg)
        assert np.array_equal(first.U, second.U)
        assert np.array_equal(first.V, second.V)

    def test_mmmf_prediction_in_range(self, low_rank_ratings):
        cfg = TrainConfig(latent_dim=2, lam=0.5, max_iters=100, seed=1)
        model = train_mmmf(low_rank_ratings, cfg)
        completed = predict_ordinal(model, source=low_rank_ratings)

        assert model.thresholds.shape == (12, 4)
        assert completed.min() >= 1 and completed.max() <= 5
        assert np.array_equal(
            completed[low_rank_ratings.users, low_rank_ratings.items], low_rank_ratings.ratings
        ), "Observed ratings must be copied through"

    def test_empty_inputs_rejected(self):
        with pytest.raises(NoObservedEntriesError):
            train_bmmmf(SignMatrix(np.zeros((3, 3))), TrainConfig())
        with pytest.raises(NoObservedEntriesError):
            train_mmmf(SparseRatingMatrix.from_dense(np.zeros((2, 2)), rating_levels=5), TrainConfig())
