"""
Run the case30 acceptance experiments: accuracy per test case, the
dataset-size trend and the solver-versus-surrogate speedup.
Reports are written under the output directory; a summary is logged at the end.
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent))
import logging

from config import RunConfig
from models import ContingencyCase
from services import (
    generate_dataset,
    load_case,
    run_accuracy_experiment,
    run_dataset_size_study,
    run_timing_benchmark,
)
from services.evaluation import eval_report_frame, study_frame, timing_frame, write_frame, write_json

# Configure logging
logging.basicConfig(
    level=logging.INFO, format="%(asctime)s - %(name)s - %(levelname)s - %(message)s"
)
logger = logging.getLogger(__name__)

CASE30 = Path(__file__).parent.parent / "data" / "case30.m"
ACCURACY_MODELS = ["DTR", "RFR", "GBR", "NN-1"]
BASE_MAPE_LIMIT = 3.0
CONTINGENCY_MAPE_LIMIT = 6.0
SPEEDUP_TARGET = 100.0


def run_acceptance(out: Path, repeats: int, quick: bool) -> bool:
    """Run every experiment and return True when all checks pass."""
    config = RunConfig(
        grid=str(CASE30),
        s_grid_range=(-30.0, 30.0),
        test_cases=[1, 2, 3, 4],
        n_instances=1000 if quick else 5000,
        bench_instances=500 if quick else 5000,
        sizes=[500, 1000] if quick else [1000, 2000, 5000],
        models=ACCURACY_MODELS,
        repeats=repeats,
        seed=42,
        output_dir=str(out),
    )
    grid = load_case(config.grid)
    threads = config.resolved_threads()
    specs = config.model_specs(grid.name)
    checks = []

    # ---------- accuracy and robustness ----------
    logger.info("Generating datasets...")
    train = generate_dataset(grid, config.train_config(grid.name), n_jobs=threads)
    tests = {
        ContingencyCase(case).label: generate_dataset(
            grid, config.test_config(grid.name, case), n_jobs=threads
        )
        for case in config.test_cases
    }
    report = run_accuracy_experiment(
        grid, None, [], specs, repeats=repeats, base_seed=config.seed,
        n_jobs=threads, train=train, tests=tests,
    )
    write_json(report, out / "eval_report.json")
    frame = eval_report_frame(report)
    write_frame(frame, out / "eval_report.csv")

    for evaluation in report.models:
        by_case = {r.test_case: r.mean_mape for r in evaluation.results}
        base = by_case["base"]
        checks.append((f"{evaluation.model} base MAPE {base:.3f}% <= {BASE_MAPE_LIMIT}%", base <= BASE_MAPE_LIMIT))
        for label, value in by_case.items():
            if label != "base":
                checks.append(
                    (f"{evaluation.model} {label} MAPE {value:.3f}% <= {CONTINGENCY_MAPE_LIMIT}%",
                     value <= CONTINGENCY_MAPE_LIMIT)
                )
        checks.append(
            (f"{evaluation.model} derate10 MAPE within 2x base", by_case["derate10"] <= 2.0 * base)
        )

    # ---------- dataset size ----------
    logger.info("Running dataset-size study...")
    master = generate_dataset(
        grid, config.train_config(grid.name, n_instances=max(config.sizes)), n_jobs=threads
    )
    study = run_dataset_size_study(
        grid, master, tests["base"], config.sizes, config.model_specs(grid.name)[:1],
        repeats=repeats, base_seed=config.seed, n_jobs=threads,
    )
    write_json(study, out / "study.json")
    write_frame(study_frame(study), out / "study.csv")
    dtr = [e.mean_mape for e in study.entries if e.model == "DTR"]
    checks.append((f"DTR MAPE {dtr[-1]:.3f}% at {config.sizes[-1]} <= {dtr[0]:.3f}% at {config.sizes[0]}", dtr[-1] <= dtr[0]))

    # ---------- speedup ----------
    logger.info("Running timing benchmark...")
    scenarios = generate_dataset(
        grid,
        config.test_config(grid.name, ContingencyCase.BASE, n_instances=config.bench_instances),
        n_jobs=threads,
    )
    timing, _ = run_timing_benchmark(grid, scenarios, specs, train, seed=config.seed)
    write_json(timing, out / "timing.json")
    write_frame(timing_frame(timing), out / "timing.csv")
    for row in timing.models:
        checks.append(
            (f"{row.model} speedup {row.speedup:.1f}x >= {SPEEDUP_TARGET:.0f}x", row.speedup >= SPEEDUP_TARGET)
        )

    # Print summary
    logger.info("=" * 60)
    logger.info("ACCEPTANCE SUMMARY")
    logger.info("=" * 60)
    for message, passed in checks:
        logger.info(f"[{'PASS' if passed else 'FAIL'}] {message}")
    logger.info("=" * 60)
    return all(passed for _, passed in checks)


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="runs/acceptance")
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--quick", action="store_true", help="reduced dataset sizes")
    args = parser.parse_args()
    try:
        sys.exit(0 if run_acceptance(Path(args.out), args.repeats, args.quick) else 1)
    except Exception as e:
        logger.error(f"Fatal error during acceptance run: {str(e)}")
        raise
