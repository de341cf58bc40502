"""Accuracy experiments, timing benchmark and dataset-size study."""

import logging
import os
import platform
import time
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from threadpoolctl import threadpool_limits

from models import (
    CaseResult,
    EnvironmentInfo,
    EvalReport,
    GridCase,
    ModelEvaluation,
    ModelSpec,
    Provenance,
    ScenarioConfig,
    StudyEntry,
    StudyReport,
    TimingReport,
    TimingRow,
)

from .dcopf import solve_dcopf
from .exceptions import BenchmarkError, MapeDenominatorError
from .grid_model import apply_modification, grid_hash
from .scenario_generator import Dataset, generate_dataset
from .seeding import derive_seed
from .surrogate_models import TrainedModel, fit_model, predict

logger = logging.getLogger(__name__)

MAPE_GUARD = 1e-9
REPORT_FLOAT_FORMAT = "%.10g"


def mape(y_true, y_pred, guard: float = MAPE_GUARD) -> float:
    """
    Mean absolute percentage error over every (row, node) element.

    Raises:
        ValueError: shapes differ
        MapeDenominatorError: some ``|y_true| < guard``
    """
    y_true = np.atleast_2d(np.asarray(y_true, dtype=float))
    y_pred = np.atleast_2d(np.asarray(y_pred, dtype=float))
    if y_true.shape != y_pred.shape:
        raise ValueError(f"shape mismatch: {y_true.shape} vs {y_pred.shape}")
    small = np.abs(y_true) < guard
    if np.any(small):
        row, node = (int(i) for i in np.argwhere(small)[0])
        raise MapeDenominatorError(row, node, float(y_true[row, node]))
    return float(100.0 * np.mean(np.abs(y_true - y_pred) / np.abs(y_true)))


def seed_for_repeat(base_seed: int, repeat: int) -> int:
    return derive_seed(base_seed, repeat)


def _aggregate(values: Sequence[float]) -> Tuple[float, float]:
    arr = np.asarray(values, dtype=float)
    return float(np.mean(arr)), float(np.std(arr))


def _case_labels(test_cfgs: Sequence[ScenarioConfig]) -> List[str]:
    labels = []
    for cfg in test_cfgs:
        label = cfg.test_case.label
        if label in labels:
            label = f"{label}_{len(labels)}"
        labels.append(label)
    return labels


def evaluate_models(
    models: Sequence[TrainedModel], datasets: Mapping[str, Dataset]
) -> List[ModelEvaluation]:
    """Single-pass MAPE of already trained models on stored test datasets."""
    evaluations = []
    for model in models:
        results = []
        for label, data in datasets.items():
            value = mape(data.targets, predict(model, data.features))
            results.append(
                CaseResult(
                    test_case=label,
                    n_test_rows=data.n_instances,
                    mape_per_repeat=[value],
                    mean_mape=value,
                    std_mape=0.0,
                )
            )
        evaluations.append(ModelEvaluation(model=model.name, kind=model.kind, results=results))
    return evaluations


def _fit_and_score(spec: ModelSpec, train: Dataset, tests: Mapping[str, Dataset], seed: int):
    model = fit_model(spec, train.features, train.targets, seed=seed)
    return {label: mape(data.targets, predict(model, data.features)) for label, data in tests.items()}


def run_accuracy_experiment(
    grid: GridCase,
    train_cfg: Optional[ScenarioConfig],
    test_cfgs: Sequence[ScenarioConfig],
    specs: Sequence[ModelSpec],
    repeats: int,
    base_seed: int = 0,
    n_jobs: int = 1,
    train: Optional[Dataset] = None,
    tests: Optional[Mapping[str, Dataset]] = None,
) -> EvalReport:
    """
    Fit every model ``repeats`` times and score it on every test dataset.

    Datasets are generated once and shared by all repeats and models; only
    the model seed ``derive_seed(base_seed, r)`` changes between repeats.

    Args:
        grid: Grid the datasets come from
        train_cfg: Training scenario config (ignored when ``train`` is given)
        test_cfgs: One config per test dataset (ignored when ``tests`` is given)
        specs: Models to evaluate
        repeats: Number of fits per model
        base_seed: Seed the per-repeat model seeds derive from
        n_jobs: joblib workers for generation and fitting
        train: Pre-generated training dataset
        tests: Pre-generated test datasets keyed by test-case label

    Returns:
        Full report; nothing is returned if any fit or generation fails
    """
    if repeats < 1:
        raise ValueError("repeats must be at least 1")
    if train is None:
        train = generate_dataset(grid, train_cfg, n_jobs=n_jobs)
    if tests is None:
        tests = {
            label: generate_dataset(grid, cfg, n_jobs=n_jobs)
            for label, cfg in zip(_case_labels(test_cfgs), test_cfgs)
        }

    seeds = [seed_for_repeat(base_seed, r) for r in range(repeats)]
    jobs = [(spec, r) for spec in specs for r in range(repeats)]
    logger.info(f"Running {len(jobs)} fits ({len(specs)} models x {repeats} repeats)")
    scores = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_fit_and_score)(spec, train, tests, seeds[r]) for spec, r in jobs
    )

    evaluations = []
    for i, spec in enumerate(specs):
        per_repeat = scores[i * repeats : (i + 1) * repeats]
        results = []
        for label, data in tests.items():
            values = [s[label] for s in per_repeat]
            mean, std = _aggregate(values)
            results.append(
                CaseResult(
                    test_case=label,
                    n_test_rows=data.n_instances,
                    mape_per_repeat=values,
                    mean_mape=mean,
                    std_mape=std,
                )
            )
        evaluations.append(ModelEvaluation(model=spec.name, kind=spec.kind, results=results))

    return EvalReport(
        repeats=repeats,
        models=evaluations,
        provenance=Provenance(
            grid_name=grid.name,
            grid_hash=grid_hash(grid),
            train_dataset_hash=train.content_hash(),
            test_dataset_hashes={label: data.content_hash() for label, data in tests.items()},
            base_seed=base_seed,
            model_seeds=seeds,
        ),
    )


# ========== Timing ==========


def environment_info(thread_count: int = 1) -> EnvironmentInfo:
    return EnvironmentInfo(
        cpu=platform.processor() or platform.machine() or "unknown",
        machine=platform.platform(),
        python=platform.python_version(),
        cpu_count=os.cpu_count() or 1,
        thread_count=thread_count,
    )


def _solve_all(grid: GridCase, scenarios: Dataset) -> None:
    for j in range(scenarios.n_instances):
        edited = apply_modification(grid, scenarios.metadata.contingencies[j])
        solve_dcopf(edited, scenarios.demands[j], check=False)


def run_timing_benchmark(
    grid: GridCase,
    scenarios: Dataset,
    specs: Sequence[ModelSpec],
    train: Dataset,
    seed: int = 0,
) -> Tuple[TimingReport, Dict[str, TrainedModel]]:
    """
    Time the solver against batched surrogate prediction.

    Everything runs serially in this thread with native BLAS/LAPACK pools
    limited to one thread. One warm-up solve and one warm-up prediction per
    model are excluded from the measurements.

    Args:
        grid: Grid the scenarios come from
        scenarios: Pre-generated instances (demands and contingencies)
        specs: Models to fit and time
        train: Training data for the timed fits
        seed: Model seed

    Returns:
        The report and the fitted models
    """
    if scenarios is None or scenarios.n_instances == 0:
        raise BenchmarkError("empty benchmark: n_instances must be positive")

    with threadpool_limits(limits=1):
        models: Dict[str, TrainedModel] = {}
        training: Dict[str, float] = {}
        for spec in specs:
            start = time.perf_counter()
            models[spec.name] = fit_model(spec, train.features, train.targets, seed=seed)
            training[spec.name] = time.perf_counter() - start

        # warm-up
        _solve_all(grid, scenarios.head(1))
        for model in models.values():
            predict(model, scenarios.features[:1])

        start = time.perf_counter()
        _solve_all(grid, scenarios)
        solver_seconds = time.perf_counter() - start
        logger.info(f"Solved {scenarios.n_instances} instances in {solver_seconds:.3f} s")

        rows = []
        for name, model in models.items():
            start = time.perf_counter()
            predict(model, scenarios.features)
            processing = time.perf_counter() - start
            rows.append(
                TimingRow(
                    model=name,
                    training_seconds=training[name],
                    processing_seconds=processing,
                    speedup=solver_seconds / processing,
                )
            )
            logger.info(f"{name}: {processing:.6f} s, speedup {solver_seconds / processing:.1f}x")

    report = TimingReport(
        grid_name=grid.name,
        n_instances=scenarios.n_instances,
        solver_seconds=solver_seconds,
        models=rows,
        environment=environment_info(thread_count=1),
    )
    return report, models


# ========== Dataset-size study ==========


def run_dataset_size_study(
    grid: GridCase,
    master: Dataset,
    test: Dataset,
    sizes: Sequence[int],
    specs: Sequence[ModelSpec],
    repeats: int,
    base_seed: int = 0,
    n_jobs: int = 1,
) -> StudyReport:
    """
    Mean MAPE per (model, size) using nested prefixes of one master dataset.

    Raises:
        ValueError: sizes not ascending, or larger than the master dataset
    """
    sizes = list(sizes)
    if not sizes or any(b < a for a, b in zip(sizes, sizes[1:])):
        raise ValueError(f"sizes must be a non-empty ascending list, got {sizes}")
    if sizes[0] < 1 or sizes[-1] > master.n_instances:
        raise ValueError(
            f"sizes must lie in 1..{master.n_instances} (master dataset rows), got {sizes}"
        )

    seeds = [seed_for_repeat(base_seed, r) for r in range(repeats)]
    jobs = [(spec, size, r) for spec in specs for size in sizes for r in range(repeats)]
    scores = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_fit_and_score)(spec, master.head(size), {"test": test}, seeds[r])
        for spec, size, r in jobs
    )

    entries = []
    for i in range(0, len(jobs), repeats):
        spec, size, _ = jobs[i]
        values = [s["test"] for s in scores[i : i + repeats]]
        mean, std = _aggregate(values)
        entries.append(
            StudyEntry(
                model=spec.name,
                size=size,
                mape_per_repeat=values,
                mean_mape=mean,
                std_mape=std,
            )
        )

    return StudyReport(
        grid_name=grid.name,
        sizes=sizes,
        repeats=repeats,
        entries=entries,
        provenance=Provenance(
            grid_name=grid.name,
            grid_hash=grid_hash(grid),
            train_dataset_hash=master.content_hash(),
            test_dataset_hashes={"test": test.content_hash()},
            base_seed=base_seed,
            model_seeds=seeds,
        ),
    )


# ========== Tables and plot data ==========


def eval_report_frame(report: EvalReport) -> pd.DataFrame:
    rows = [
        {
            "model": evaluation.model,
            "kind": evaluation.kind.value,
            "test_case": result.test_case,
            "n_test_rows": result.n_test_rows,
            "repeats": report.repeats,
            "mean_mape": result.mean_mape,
            "std_mape": result.std_mape,
        }
        for evaluation in report.models
        for result in evaluation.results
    ]
    return pd.DataFrame(
        rows,
        columns=["model", "kind", "test_case", "n_test_rows", "repeats", "mean_mape", "std_mape"],
    )


def timing_frame(report: TimingReport) -> pd.DataFrame:
    rows = [
        {
            "model": "solver",
            "training_seconds": float("nan"),
            "processing_seconds": report.solver_seconds,
            "speedup": 1.0,
        }
    ]
    rows.extend(row.model_dump() for row in report.models)
    frame = pd.DataFrame(rows, columns=["model", "training_seconds", "processing_seconds", "speedup"])
    frame.insert(0, "n_instances", report.n_instances)
    frame.insert(0, "grid", report.grid_name)
    return frame


def study_frame(report: StudyReport) -> pd.DataFrame:
    return pd.DataFrame(
        [
            {"model": e.model, "size": e.size, "mean_mape": e.mean_mape, "std_mape": e.std_mape}
            for e in report.entries
        ],
        columns=["model", "size", "mean_mape", "std_mape"],
    )


def accuracy_plot_data(reports: Mapping[str, EvalReport]) -> pd.DataFrame:
    """Grid label vs MAPE, one row per (grid, model, test case)."""
    frames = []
    for grid_label, report in reports.items():
        frame = eval_report_frame(report)[["model", "test_case", "mean_mape", "std_mape"]]
        frame.insert(0, "grid", grid_label)
        frames.append(frame)
    return pd.concat(frames, ignore_index=True)


def timing_plot_data(reports: Sequence[TimingReport]) -> pd.DataFrame:
    """Grid label vs seconds for solver, processing and training series."""
    rows = []
    for report in reports:
        rows.append({"grid": report.grid_name, "series": "solver", "seconds": report.solver_seconds})
        for row in report.models:
            rows.append(
                {"grid": report.grid_name, "series": f"{row.model}:processing", "seconds": row.processing_seconds}
            )
            rows.append(
                {"grid": report.grid_name, "series": f"{row.model}:training", "seconds": row.training_seconds}
            )
    return pd.DataFrame(rows, columns=["grid", "series", "seconds"])


def study_plot_data(report: StudyReport) -> pd.DataFrame:
    """Dataset size vs MAPE, one column per model."""
    return (
        study_frame(report)
        .pivot_table(index="size", columns="model", values="mean_mape", aggfunc="first")
        .reset_index()
    )


def write_json(report, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(report.model_dump_json(indent=2), encoding="utf-8")
    return path


def write_frame(frame: pd.DataFrame, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=REPORT_FLOAT_FORMAT)
    return path
