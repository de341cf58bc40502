"""
Test suite for MAPE, accuracy experiments, timing and the dataset-size study.
"""

import numpy as np
import pandas as pd
import pytest
from threadpoolctl import threadpool_info, threadpool_limits

from models import (
    GbrHyper,
    ModelKind,
    ModelSpec,
    PerturbationSpec,
    ScenarioConfig,
    TreeHyper,
)
from services import (
    evaluate_models,
    fit_tree,
    generate_dataset,
    mape,
    run_accuracy_experiment,
    run_dataset_size_study,
    run_timing_benchmark,
)
import services.evaluation as evaluation
from services.evaluation import (
    accuracy_plot_data,
    eval_report_frame,
    seed_for_repeat,
    study_frame,
    study_plot_data,
    timing_frame,
    timing_plot_data,
    write_frame,
    write_json,
)
from services.exceptions import BenchmarkError, MapeDenominatorError
from tests.grids import make_dataset

DTR = ModelSpec(name="DTR", kind=ModelKind.DTR, hyper=TreeHyper(max_leaf_nodes=8))
GBR = ModelSpec(name="GBR", kind=ModelKind.GBR, hyper=GbrHyper(n_estimators=10, subsample=0.7))


def split(dataset, n_train):
    """Train prefix and test suffix of a synthetic dataset."""
    train = make_dataset(dataset.features[:n_train], dataset.targets[:n_train])
    test = make_dataset(dataset.features[n_train:], dataset.targets[n_train:])
    return train, test


@pytest.mark.unit
class TestMape:
    """Test the error metric."""

    def test_identical(self):
        """Test that a perfect prediction scores 0."""
        y = np.array([[10.0, 20.0], [30.0, 40.0]])

        assert mape(y, y) == 0.0

    def test_single_value(self):
        """Test 100 predicted as 95."""
        assert mape([[100.0]], [[95.0]]) == pytest.approx(5.0)

    def test_elementwise_mean(self):
        """Test [10, 20] predicted as [11, 18]."""
        assert mape([[10.0, 20.0]], [[11.0, 18.0]]) == pytest.approx(10.0)

    def test_scale_invariant(self):
        """Test that scaling both sides leaves the metric unchanged."""
        rng = np.random.default_rng(0)
        y = rng.uniform(5.0, 50.0, size=(20, 4))
        p = y + rng.normal(0.0, 1.0, size=y.shape)

        assert mape(3.0 * y, 3.0 * p) == pytest.approx(mape(y, p))

    def test_negative_prices(self):
        """Test that the denominator uses the absolute price."""
        assert mape([[-10.0]], [[-9.0]]) == pytest.approx(10.0)

    def test_shape_mismatch(self):
        """Test that unequal shapes are rejected."""
        with pytest.raises(ValueError, match="shape"):
            mape(np.ones((2, 3)), np.ones((3, 2)))

    def test_zero_denominator(self):
        """Test that a zero price is reported with its position."""
        with pytest.raises(MapeDenominatorError) as excinfo:
            mape([[10.0, 20.0], [30.0, 0.0]], np.ones((2, 2)))

        assert (excinfo.value.row, excinfo.value.node) == (1, 1)


@pytest.mark.unit
class TestAccuracyExperiment:
    """Test repeated fits on fixed datasets."""

    def test_constant_targets(self, two_bus):
        """Test that a one-leaf tree on constant prices scores 0."""
        X = np.random.default_rng(1).uniform(10.0, 20.0, size=(30, 4))
        data = make_dataset(X, np.full((30, 2), 10.0))
        spec = ModelSpec(name="DTR", kind=ModelKind.DTR, hyper=TreeHyper(max_leaf_nodes=1))

        report = run_accuracy_experiment(
            two_bus, None, [], [spec], repeats=1, train=data, tests={"base": data}
        )

        result = report.models[0].results[0]
        assert result.mean_mape == 0.0
        assert result.std_mape == 0.0

    def test_report_structure(self, two_bus, synthetic_dataset):
        """Test per-model, per-case aggregation and provenance."""
        train, test = split(synthetic_dataset, 90)
        report = run_accuracy_experiment(
            two_bus, None, [], [DTR, GBR], repeats=3, base_seed=4, train=train, tests={"base": test}
        )

        assert report.repeats == 3
        assert [m.model for m in report.models] == ["DTR", "GBR"]
        gbr = report.models[1].results[0]
        assert len(gbr.mape_per_repeat) == 3
        assert gbr.mean_mape == pytest.approx(np.mean(gbr.mape_per_repeat))
        assert gbr.std_mape == pytest.approx(np.std(gbr.mape_per_repeat))
        assert gbr.n_test_rows == 30
        assert report.provenance.model_seeds == [seed_for_repeat(4, r) for r in range(3)]
        assert report.provenance.train_dataset_hash == train.content_hash()

    def test_deterministic_tree_has_zero_spread(self, two_bus, synthetic_dataset):
        """Test that a seed-independent model gives equal repeats."""
        train, test = split(synthetic_dataset, 90)
        report = run_accuracy_experiment(
            two_bus, None, [], [DTR], repeats=4, train=train, tests={"base": test}
        )

        result = report.models[0].results[0]
        assert len(set(result.mape_per_repeat)) == 1
        assert result.std_mape == 0.0

    def test_rerun_is_identical(self, two_bus, synthetic_dataset):
        """Test that identical seeds reproduce the report, whatever the worker count."""
        train, test = split(synthetic_dataset, 90)
        kwargs = dict(repeats=2, base_seed=7, train=train, tests={"base": test})

        a = run_accuracy_experiment(two_bus, None, [], [GBR], n_jobs=1, **kwargs)
        b = run_accuracy_experiment(two_bus, None, [], [GBR], n_jobs=2, **kwargs)

        assert a == b

    def test_repeats_must_be_positive(self, two_bus, synthetic_dataset):
        """Test that zero repeats are rejected."""
        with pytest.raises(ValueError, match="repeats"):
            run_accuracy_experiment(
                two_bus, None, [], [DTR], repeats=0,
                train=synthetic_dataset, tests={"base": synthetic_dataset},
            )

    def test_evaluate_models(self, synthetic_dataset):
        """Test single-pass scoring of trained models."""
        train, test = split(synthetic_dataset, 90)
        model = fit_tree(train.features, train.targets, TreeHyper(max_leaf_nodes=8))

        evaluations = evaluate_models([model], {"base": test, "again": test})

        assert [r.test_case for r in evaluations[0].results] == ["base", "again"]
        assert evaluations[0].results[0].mean_mape == evaluations[0].results[1].mean_mape


@pytest.mark.integration
class TestGeneratedExperiment:
    """Test the experiment with generated two-bus data."""

    def test_generates_datasets(self, two_bus):
        """Test that configs are turned into datasets when none are given."""
        perturbation = PerturbationSpec(s_grid_min=-20.0, s_grid_max=20.0)
        train_cfg = ScenarioConfig(n_instances=20, perturbation=perturbation, seed=1)
        test_cfg = ScenarioConfig(n_instances=5, perturbation=perturbation, seed=2)

        report = run_accuracy_experiment(two_bus, train_cfg, [test_cfg], [DTR], repeats=1)

        result = report.models[0].results[0]
        assert result.test_case == "base"
        assert result.n_test_rows == 5
        assert result.mean_mape == pytest.approx(0.0, abs=1e-6)


@pytest.mark.unit
class TestDatasetSizeStudy:
    """Test the nested-prefix study."""

    def test_duplicate_sizes(self, two_bus, synthetic_dataset):
        """Test that a repeated size gives identical entries."""
        master, test = split(synthetic_dataset, 90)
        report = run_dataset_size_study(two_bus, master, test, [40, 40], [DTR, GBR], repeats=2)

        by_model = {}
        for entry in report.entries:
            by_model.setdefault(entry.model, []).append(entry.mean_mape)
        assert by_model["DTR"][0] == by_model["DTR"][1]
        assert by_model["GBR"][0] == by_model["GBR"][1]

    def test_entries_per_model_and_size(self, two_bus, synthetic_dataset):
        """Test one entry per (model, size) in order."""
        master, test = split(synthetic_dataset, 90)
        report = run_dataset_size_study(two_bus, master, test, [30, 60, 90], [DTR], repeats=1)

        assert [(e.model, e.size) for e in report.entries] == [("DTR", 30), ("DTR", 60), ("DTR", 90)]
        assert report.provenance.train_dataset_hash == master.content_hash()

    def test_unsorted_sizes(self, two_bus, synthetic_dataset):
        """Test that descending sizes are rejected."""
        master, test = split(synthetic_dataset, 90)

        with pytest.raises(ValueError, match="ascending"):
            run_dataset_size_study(two_bus, master, test, [60, 30], [DTR], repeats=1)

    def test_size_beyond_master(self, two_bus, synthetic_dataset):
        """Test that a size larger than the master dataset is rejected."""
        master, test = split(synthetic_dataset, 90)

        with pytest.raises(ValueError, match="master"):
            run_dataset_size_study(two_bus, master, test, [30, 91], [DTR], repeats=1)


@pytest.mark.integration
class TestTimingBenchmark:
    """Test the solver-versus-surrogate timing."""

    def test_empty_benchmark(self, two_bus, synthetic_dataset):
        """Test that a benchmark without instances is refused."""
        with pytest.raises(BenchmarkError, match="empty"):
            run_timing_benchmark(two_bus, None, [DTR], synthetic_dataset)

    def test_empty_benchmark_is_value_error(self, two_bus, synthetic_dataset):
        """Test that the refusal is also a ValueError."""
        with pytest.raises(ValueError):
            run_timing_benchmark(two_bus, None, [DTR], synthetic_dataset)

    def test_report(self, two_bus):
        """Test timings, speedup arithmetic and the fitted models."""
        perturbation = PerturbationSpec(s_grid_min=-20.0, s_grid_max=20.0)
        train = generate_dataset(two_bus, ScenarioConfig(n_instances=20, perturbation=perturbation))
        scenarios = generate_dataset(
            two_bus, ScenarioConfig(n_instances=6, perturbation=perturbation, seed=3)
        )

        report, models = run_timing_benchmark(two_bus, scenarios, [DTR, GBR], train)

        assert report.n_instances == 6
        assert report.solver_seconds > 0
        assert set(models) == {"DTR", "GBR"}
        for row in report.models:
            assert row.processing_seconds > 0
            assert row.training_seconds > 0
            assert row.speedup == pytest.approx(report.solver_seconds / row.processing_seconds)
        assert report.environment.thread_count == 1

        frame = timing_frame(report)
        assert frame["model"].tolist() == ["solver", "DTR", "GBR"]
        plot = timing_plot_data([report])
        assert len(plot) == 1 + 2 * 2

    def test_native_threads_limited_while_timing(self, two_bus, mocker):
        """Test that BLAS/LAPACK pools run single-threaded in the timed section."""
        perturbation = PerturbationSpec(s_grid_min=-20.0, s_grid_max=20.0)
        train = generate_dataset(two_bus, ScenarioConfig(n_instances=20, perturbation=perturbation))
        scenarios = generate_dataset(
            two_bus, ScenarioConfig(n_instances=4, perturbation=perturbation, seed=3)
        )
        limits = mocker.patch("services.evaluation.threadpool_limits", wraps=threadpool_limits)
        seen = []
        real_predict = evaluation.predict

        def recording_predict(model, X):
            seen.extend(pool["num_threads"] for pool in threadpool_info())
            return real_predict(model, X)

        mocker.patch("services.evaluation.predict", side_effect=recording_predict)

        run_timing_benchmark(two_bus, scenarios, [DTR], train)

        limits.assert_called_once_with(limits=1)
        assert all(count == 1 for count in seen)


@pytest.mark.unit
class TestTables:
    """Test report tables and their files."""

    def test_eval_frames_and_files(self, two_bus, synthetic_dataset, tmp_path):
        """Test the flat table, plot data and written files."""
        train, test = split(synthetic_dataset, 90)
        report = run_accuracy_experiment(
            two_bus, None, [], [DTR, GBR], repeats=2, train=train, tests={"base": test, "derate10": test}
        )

        frame = eval_report_frame(report)
        assert len(frame) == 4
        assert list(frame.columns) == [
            "model", "kind", "test_case", "n_test_rows", "repeats", "mean_mape", "std_mape",
        ]

        plot = accuracy_plot_data({"case30": report})
        assert set(plot["grid"]) == {"case30"}

        csv_path = write_frame(frame, tmp_path / "out" / "eval.csv")
        json_path = write_json(report, tmp_path / "out" / "eval.json")
        reread = pd.read_csv(csv_path)
        assert reread["model"].tolist() == frame["model"].tolist()
        assert json_path.read_text(encoding="utf-8").startswith("{")

    def test_study_frames(self, two_bus, synthetic_dataset):
        """Test the long table and the size-by-model pivot."""
        master, test = split(synthetic_dataset, 90)
        report = run_dataset_size_study(two_bus, master, test, [30, 90], [DTR, GBR], repeats=1)

        assert len(study_frame(report)) == 4
        pivot = study_plot_data(report)
        assert pivot["size"].tolist() == [30, 90]
        assert {"DTR", "GBR"} <= set(pivot.columns)
