"""Command-line entry point: parse, generate, train, evaluate, experiment, bench, study."""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from pydantic import ValidationError

from config import RunConfig, load_run_config, write_effective_config
from models import ContingencyCase, EvalReport, Provenance
from services import (
    evaluate_models,
    generate_dataset,
    grid_hash,
    load_case,
    load_dataset,
    load_model,
    run_accuracy_experiment,
    run_dataset_size_study,
    run_timing_benchmark,
    save_dataset,
    save_model,
    summarize,
    validate,
)
from services.evaluation import (
    accuracy_plot_data,
    eval_report_frame,
    study_frame,
    study_plot_data,
    timing_frame,
    timing_plot_data,
    write_frame,
    write_json,
)
from services.exceptions import EXIT_DATA, EXIT_OK, EXIT_USAGE, GridPricingError
from services.surrogate_models import fit_model

logger = logging.getLogger("gridprice")


class CliArgumentParser(argparse.ArgumentParser):
    """ArgumentParser whose usage errors exit with code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _range(text: str):
    try:
        low, high = (float(part) for part in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected MIN:MAX, got '{text}'")
    return [low, high]


def _int_list(text: str) -> List[int]:
    try:
        return [int(part) for part in text.split(",") if part]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got '{text}'")


def _name_list(text: str) -> List[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


def _add_run_options(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="JSON run config")
    sub.add_argument("--grid", help="MATPOWER case file")
    sub.add_argument("--range", dest="s_grid_range", type=_range, help="perturbation MIN:MAX (percent)")
    sub.add_argument("--seed", type=int)
    sub.add_argument("--models", type=_name_list, help="comma-separated model names")
    sub.add_argument("--out", dest="output_dir", help="output directory")
    sub.add_argument("--threads", dest="thread_budget", type=int)
    sub.add_argument("--repeats", type=int)


def build_parser() -> CliArgumentParser:
    parser = CliArgumentParser(prog="gridprice", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    subs = parser.add_subparsers(dest="command", required=True, parser_class=CliArgumentParser)

    p = subs.add_parser("parse", help="parse and validate a case file")
    p.add_argument("case_path")
    p.add_argument("--json", action="store_true", help="machine-readable summary")

    p = subs.add_parser("generate", help="generate a labelled dataset")
    _add_run_options(p)
    p.add_argument("--n", dest="n_instances", type=int)
    p.add_argument("--test-case", type=int, choices=[c.value for c in ContingencyCase])
    p.add_argument("--stem", default="dataset", help="dataset file prefix")

    p = subs.add_parser("train", help="fit models on a dataset")
    _add_run_options(p)
    p.add_argument("--n", dest="n_instances", type=int)
    p.add_argument("--data", help="directory holding the training dataset")
    p.add_argument("--stem", default="dataset")

    p = subs.add_parser("evaluate", help="score saved models on saved datasets")
    _add_run_options(p)
    p.add_argument("--model-dir", required=True, help="directory with saved models")
    p.add_argument("--data", required=True, help="directory holding test datasets")
    p.add_argument("--stems", type=_name_list, default=["dataset"])

    p = subs.add_parser("experiment", help="repeated accuracy experiment")
    _add_run_options(p)
    p.add_argument("--n", dest="n_instances", type=int)
    p.add_argument("--n-test", dest="n_test_instances", type=int)
    p.add_argument("--test-cases", type=_int_list)

    p = subs.add_parser("bench", help="solver vs surrogate timing")
    _add_run_options(p)
    p.add_argument("--n", dest="bench_instances", type=int)
    p.add_argument("--n-train", dest="n_instances", type=int)

    p = subs.add_parser("study", help="dataset-size study")
    _add_run_options(p)
    p.add_argument("--sizes", type=_int_list)
    p.add_argument("--n-test", dest="n_test_instances", type=int)
    return parser


def _normalize_argv(argv: List[str]) -> List[str]:
    """Join ``--range -30:30`` so argparse does not read the value as a flag."""
    out = []
    i = 0
    while i < len(argv):
        if argv[i] == "--range" and i + 1 < len(argv):
            out.append(f"--range={argv[i + 1]}")
            i += 2
        else:
            out.append(argv[i])
            i += 1
    return out


_CONFIG_KEYS = set(RunConfig.model_fields)


def _run_config(args) -> RunConfig:
    overrides = {
        key: value
        for key, value in vars(args).items()
        if key in _CONFIG_KEYS and value is not None
    }
    if getattr(args, "test_case", None) is not None:
        overrides["test_cases"] = [args.test_case]
    config = load_run_config(args.config, **overrides)
    return config


def _load_grid(config: RunConfig):
    grid = load_case(config.grid)
    logger.info(f"Loaded '{grid.name}': {summarize(grid)}")
    return grid


# ========== Subcommands ==========


def cmd_parse(args) -> int:
    grid = load_case(args.case_path)
    report = validate(grid)
    if args.json:
        print(
            json.dumps(
                {
                    "name": grid.name,
                    "buses": len(grid.buses),
                    "generators": len(grid.generators),
                    "branches": len(grid.branches),
                    "base_mva": grid.base_mva,
                    "hash": grid_hash(grid),
                    "valid": report.is_valid,
                    "violations": report.violations,
                    "warnings": report.warnings,
                },
                indent=2,
            )
        )
    else:
        print(summarize(grid))
        for warning in report.warnings:
            print(f"warning: {warning}", file=sys.stderr)
    if not report.is_valid:
        for violation in report.violations:
            print(f"invalid: {violation}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def cmd_generate(args) -> int:
    config = _run_config(args)
    grid = _load_grid(config)
    out = config.resolved_output_dir()
    write_effective_config(config, out)

    test_case = config.test_cases[0]
    if test_case == ContingencyCase.BASE:
        scenario = config.train_config(grid.name)
    else:
        scenario = config.test_config(grid.name, test_case, n_instances=config.n_instances)
    dataset = generate_dataset(grid, scenario, n_jobs=config.resolved_threads())
    paths = save_dataset(dataset, out, stem=args.stem)
    for path in paths:
        print(path)
    print(f"content hash {dataset.content_hash()}")
    return EXIT_OK


def _training_data(args, config: RunConfig, grid):
    if args.data:
        return load_dataset(args.data, stem=args.stem)
    return generate_dataset(grid, config.train_config(grid.name), n_jobs=config.resolved_threads())


def cmd_train(args) -> int:
    config = _run_config(args)
    grid = _load_grid(config)
    out = config.resolved_output_dir()
    write_effective_config(config, out)

    train = _training_data(args, config, grid)
    for spec in config.model_specs(grid.name):
        model = fit_model(spec, train.features, train.targets, seed=config.seed, n_jobs=config.resolved_threads())
        model.metadata["train_dataset_hash"] = train.content_hash()
        print(save_model(model, out / "models" / f"{spec.name}.npz"))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    config = _run_config(args)
    grid = _load_grid(config)
    out = config.resolved_output_dir()
    write_effective_config(config, out)

    model_paths = sorted(Path(args.model_dir).glob("*.npz"))
    if not model_paths:
        raise FileNotFoundError(f"no models in {args.model_dir}")
    models = [load_model(path) for path in model_paths]
    # keyed by test-case label like `experiment`; the stem breaks ties
    datasets = {}
    for stem in args.stems:
        data = load_dataset(args.data, stem=stem)
        label = data.metadata.config.test_case.label
        if label in datasets:
            logger.warning(f"test case '{label}' loaded twice; keying '{stem}' by its stem")
            label = stem
        datasets[label] = data

    report = EvalReport(
        repeats=1,
        models=evaluate_models(models, datasets),
        provenance=Provenance(
            grid_name=grid.name,
            grid_hash=grid_hash(grid),
            train_dataset_hash=models[0].metadata.get("train_dataset_hash"),
            test_dataset_hashes={stem: data.content_hash() for stem, data in datasets.items()},
            base_seed=config.seed,
            model_seeds=sorted({model.seed for model in models}),
        ),
    )
    print(write_json(report, out / "eval_report.json"))
    print(write_frame(eval_report_frame(report), out / "eval_report.csv"))
    for evaluation in report.models:
        for result in evaluation.results:
            print(f"{evaluation.model:6s} {result.test_case:10s} MAPE {result.mean_mape:.4f}%")
    return EXIT_OK


def cmd_experiment(args) -> int:
    config = _run_config(args)
    grid = _load_grid(config)
    out = config.resolved_output_dir()
    write_effective_config(config, out)
    threads = config.resolved_threads()

    train = generate_dataset(grid, config.train_config(grid.name), n_jobs=threads)
    save_dataset(train, out / "data", stem="train")
    tests = {}
    for case in config.test_cases:
        label = ContingencyCase(case).label
        tests[label] = generate_dataset(grid, config.test_config(grid.name, case), n_jobs=threads)
        save_dataset(tests[label], out / "data", stem=f"test_{label}")

    report = run_accuracy_experiment(
        grid,
        None,
        [],
        config.model_specs(grid.name),
        repeats=config.repeats,
        base_seed=config.seed,
        n_jobs=threads,
        train=train,
        tests=tests,
    )
    print(write_json(report, out / "eval_report.json"))
    print(write_frame(eval_report_frame(report), out / "eval_report.csv"))
    print(write_frame(accuracy_plot_data({grid.name: report}), out / "plot_accuracy.csv"))
    return EXIT_OK


def cmd_bench(args) -> int:
    config = _run_config(args)
    grid = _load_grid(config)
    out = config.resolved_output_dir()
    write_effective_config(config, out)

    if config.bench_instances <= 0:
        raise ValueError("bench needs --n > 0")
    threads = config.resolved_threads()
    train = generate_dataset(grid, config.train_config(grid.name), n_jobs=threads)
    scenarios = generate_dataset(
        grid,
        config.test_config(grid.name, ContingencyCase.BASE, n_instances=config.bench_instances),
        n_jobs=threads,
    )
    report, _ = run_timing_benchmark(
        grid, scenarios, config.model_specs(grid.name), train, seed=config.seed
    )
    print(write_json(report, out / "timing.json"))
    print(write_frame(timing_frame(report), out / "timing.csv"))
    print(write_frame(timing_plot_data([report]), out / "plot_timing.csv"))
    return EXIT_OK


def cmd_study(args) -> int:
    config = _run_config(args)
    grid = _load_grid(config)
    out = config.resolved_output_dir()
    write_effective_config(config, out)
    threads = config.resolved_threads()

    master = generate_dataset(
        grid, config.train_config(grid.name, n_instances=max(config.sizes)), n_jobs=threads
    )
    test = generate_dataset(grid, config.test_config(grid.name, ContingencyCase.BASE), n_jobs=threads)
    report = run_dataset_size_study(
        grid,
        master,
        test,
        config.sizes,
        config.model_specs(grid.name),
        repeats=config.repeats,
        base_seed=config.seed,
        n_jobs=threads,
    )
    print(write_json(report, out / "study.json"))
    print(write_frame(study_frame(report), out / "study.csv"))
    print(write_frame(study_plot_data(report), out / "plot_study.csv"))
    return EXIT_OK


COMMANDS = {
    "parse": cmd_parse,
    "generate": cmd_generate,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "experiment": cmd_experiment,
    "bench": cmd_bench,
    "study": cmd_study,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(_normalize_argv(list(sys.argv[1:] if argv is None else argv)))

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )

    try:
        return COMMANDS[args.command](args)
    except GridPricingError as e:
        logger.error(f"{args.command} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except ValidationError as e:
        print(f"error: invalid configuration: {e}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
