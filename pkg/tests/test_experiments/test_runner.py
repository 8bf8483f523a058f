"""
End-to-end tests for the experiment runner on small generated datasets.
"""

import json
from pathlib import Path

import numpy as np
import pytest

from mflab.config import settings
from mflab.experiments.runner import ExperimentRunner
from mflab.repositories.multilabel import save_labels_csv
from mflab.repositories.ratings import save_ratings_tsv
from mflab.schemas.experiment import ExperimentConfig
from mflab.schemas.report import RunEntry, RunReport
from mflab.services.exceptions import ConfigurationError

REPORT_SCHEMA = Path(__file__).resolve().parents[2] / "docs" / "report_schema.json"
CF_METRICS = {"mae", "rmse", "fre", "nmae", "zero_one"}
MLC_METRICS = {"hamming_loss", "accuracy", "subset_accuracy", "example_f1", "macro_f1", "micro_f1"}


@pytest.fixture
def ratings_path(tmp_path, low_rank_ratings) -> str:
    return str(save_ratings_tsv(low_rank_ratings, tmp_path / "ratings.tsv"))


@pytest.fixture
def multilabel_paths(tmp_path, multilabel_dataset):
    features = tmp_path / "X.csv"
    np.savetxt(features, multilabel_dataset.X, delimiter=",")
    labels = save_labels_csv(multilabel_dataset.Y, tmp_path / "Y.csv")
    return str(features), str(labels)


def cf_config(ratings_path: str, **overrides) -> ExperimentConfig:
    values = dict(ratings_path=ratings_path, rating_levels=5, latent_dim=2, max_iters=30, lam=0.5)
    values.update(overrides)
    return ExperimentConfig(**values)


@pytest.mark.integration
class TestCollaborativeRuns:
    """Every collaborative method under each protocol."""

    def test_weak_mmmf(self, ratings_path):
        report = ExperimentRunner(cf_config(ratings_path, method="mmmf", split="weak", seeds=[0, 1])).run()

        assert report.method == "mmmf"
        assert [run.seed for run in report.runs] == [0, 1]
        assert set(report.summary) == CF_METRICS
        assert report.summary["mae"].n == 2
        for run in report.runs:
            assert run.details["n_test"] == 12, "Weak protocol holds out one rating per user"
            assert {"train", "predict", "evaluate"} <= set(run.timings)

    def test_bmmmf_reports_zero_one_only(self, ratings_path):
        report = ExperimentRunner(cf_config(ratings_path, method="bmmmf")).run()
        assert set(report.runs[0].metrics) == {"zero_one"}
        assert 0.0 <= report.runs[0].metrics["zero_one"] <= 1.0

    def test_strong_hmf_folds_in_held_users(self, ratings_path):
        config = cf_config(ratings_path, method="hmf", split="strong", held_user_fraction=0.25)
        run = ExperimentRunner(config).run().runs[0]

        assert run.details["n_test"] == 3
        assert run.details["stage_lambdas"] == [0.5] * 4
        assert "fold_in" in run.timings

    def test_kfold_pmmmf(self, ratings_path):
        report = ExperimentRunner(cf_config(ratings_path, method="pmmmf", split="kfold", folds=3)).run()

        assert [run.fold for run in report.runs] == [0, 1, 2]
        assert sum(run.details["n_test"] for run in report.runs) == sum(run.details["n_train"] for run in report.runs) / 2

    def test_parallel_stages_match_sequential(self, ratings_path):
        hmf = ExperimentRunner(cf_config(ratings_path, method="hmf")).run()
        phmf = ExperimentRunner(cf_config(ratings_path, method="phmf", workers=2)).run()
        assert hmf.runs[0].metrics == phmf.runs[0].metrics

    def test_lambda_grid_tuned(self, ratings_path):
        config = cf_config(ratings_path, method="mmmf", lam_grid=[0.1, 1.0], max_iters=15)
        run = ExperimentRunner(config).run().runs[0]
        assert run.details["lam"] in (0.1, 1.0)

    def test_train_full_and_predict(self, ratings_path, low_rank_ratings):
        runner = ExperimentRunner(cf_config(ratings_path, method="mmmf"))
        trained = runner.train_full()
        predictions = runner.predict_collaborative(trained, source=low_rank_ratings)

        assert predictions.shape == (12, 10)
        assert predictions.min() >= 1 and predictions.max() <= 5
        metrics = runner.evaluate_collaborative(trained, predictions, low_rank_ratings)
        assert metrics["mae"] == 0.0, "Observed ratings are copied into the completion"


@pytest.mark.integration
class TestMultilabelRuns:
    def test_mlc_hmf_holdout(self, multilabel_paths):
        features, labels = multilabel_paths
        config = ExperimentConfig(
            method="mlc-hmf", features_path=features, labels_path=labels, max_iters=30, threshold=0.25, max_depth=2
        )
        report = ExperimentRunner(config).run()

        run = report.runs[0]
        assert set(run.metrics) == MLC_METRICS
        assert run.fold is None
        assert (run.details["n_train"], run.details["n_test"]) == (48, 12)
        assert run.details["nodes"] >= 1

    def test_grople_kfold(self, multilabel_paths):
        features, labels = multilabel_paths
        config = ExperimentConfig(
            method="grople", features_path=features, labels_path=labels,
            split="kfold", folds=2, latent_dim=4, n_groups=2, max_outer=5, max_iters=100,
        )
        report = ExperimentRunner(config).run()

        assert [run.fold for run in report.runs] == [0, 1]
        assert report.runs[0].details["n_groups"] == 2

    def test_rating_protocols_rejected(self, multilabel_paths):
        features, labels = multilabel_paths
        config = ExperimentConfig(method="grople", features_path=features, labels_path=labels, split="weak")
        with pytest.raises(ConfigurationError):
            ExperimentRunner(config).run()


@pytest.mark.integration
class TestReports:
    """Report structure, determinism and persistence."""

    def test_identical_runs_share_metrics(self, ratings_path):
        config = cf_config(ratings_path, method="mmmf", split="random_holdout", seeds=[3])
        first = ExperimentRunner(config).run()
        second = ExperimentRunner(config).run()

        assert first.config_hash == second.config_hash
        assert first.metric_section() == second.metric_section()

    def test_default_report_location(self, ratings_path, tmp_path, monkeypatch):
        monkeypatch.setattr(settings, "reports_dir", str(tmp_path / "reports"))
        runner = ExperimentRunner(cf_config(ratings_path, method="mmmf"))
        report = runner.run()
        path = runner.save_report(report)

        assert path == tmp_path / "reports" / f"mmmf-{report.config_hash[:12]}.json"
        saved = json.loads(path.read_text())
        required = json.loads(REPORT_SCHEMA.read_text())["required"]
        assert set(required) <= set(saved), f"Missing keys {set(required) - set(saved)}"
        assert len(saved["config_hash"]) == 64

    def test_explicit_output(self, ratings_path, tmp_path):
        output = tmp_path / "out" / "report.json"
        runner = ExperimentRunner(cf_config(ratings_path, method="mmmf", output=str(output)))
        assert runner.save_report(runner.run()) == output
        assert output.exists()


@pytest.mark.unit
class TestReportHelpers:
    def test_hash_ignores_key_order(self):
        assert RunReport.hash_config({"b": 1, "a": [1, 2]}) == RunReport.hash_config({"a": [1, 2], "b": 1})
        assert RunReport.hash_config({"a": 1}) != RunReport.hash_config({"a": 2})

    def test_summary_uses_sample_std(self):
        runs = [RunEntry(seed=0, metrics={"mae": 1.0}), RunEntry(seed=1, metrics={"mae": 3.0})]
        summary = RunReport.summarize(runs)["mae"]
        assert (summary.mean, summary.n) == (2.0, 2)
        assert summary.std == pytest.approx(np.sqrt(2.0))

    def test_single_run_has_zero_std(self):
        summary = RunReport.summarize([RunEntry(seed=0, metrics={"rmse": 0.7})])["rmse"]
        assert summary.std == 0.0
