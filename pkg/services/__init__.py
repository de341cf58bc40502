from .grid_model import (
    CaseParser,
    parse_case,
    load_case,
    format_case,
    grid_to_json,
    grid_from_json,
    grid_hash,
    base_demand,
    is_connected,
    validate,
    require_valid,
    apply_modification,
    summarize,
)
from .qp_solver import InteriorPointSolver, QpProblem, QpSolution, solve_qp
from .dcopf import (
    assemble_dcopf,
    solve_dcopf,
    lmp_sensitivity_check,
    two_sided_sensitivity,
    sensitivity_tolerance,
    branch_slack,
    is_congested,
)
from .scenario_generator import (
    Dataset,
    ScenarioGenerator,
    perturb_demands,
    extract_features,
    make_contingency,
    generate_dataset,
    replay_instance,
    save_dataset,
    load_dataset,
)
from .scaler import ScalerParams, fit_scaler, apply_scaler, invert_scaler
from .regression_tree import RegressionTree
from .ensembles import RandomForest, GradientBoosting
from .mlp import MultiLayerPerceptron, loss_and_gradients
from .surrogate_models import (
    TrainedModel,
    fit_model,
    fit_tree,
    fit_forest,
    fit_gbr,
    fit_mlp,
    predict,
    save_model,
    load_model,
)
from .evaluation import (
    mape,
    evaluate_models,
    run_accuracy_experiment,
    run_timing_benchmark,
    run_dataset_size_study,
)

__all__ = [
    "CaseParser",
    "parse_case",
    "load_case",
    "format_case",
    "grid_to_json",
    "grid_from_json",
    "grid_hash",
    "base_demand",
    "is_connected",
    "validate",
    "require_valid",
    "apply_modification",
    "summarize",
    "InteriorPointSolver",
    "QpProblem",
    "QpSolution",
    "solve_qp",
    "assemble_dcopf",
    "solve_dcopf",
    "lmp_sensitivity_check",
    "two_sided_sensitivity",
    "sensitivity_tolerance",
    "branch_slack",
    "is_congested",
    "Dataset",
    "ScenarioGenerator",
    "perturb_demands",
    "extract_features",
    "make_contingency",
    "generate_dataset",
    "replay_instance",
    "save_dataset",
    "load_dataset",
    "ScalerParams",
    "fit_scaler",
    "apply_scaler",
    "invert_scaler",
    "RegressionTree",
    "RandomForest",
    "GradientBoosting",
    "MultiLayerPerceptron",
    "loss_and_gradients",
    "TrainedModel",
    "fit_model",
    "fit_tree",
    "fit_forest",
    "fit_gbr",
    "fit_mlp",
    "predict",
    "save_model",
    "load_model",
    "mape",
    "evaluate_models",
    "run_accuracy_experiment",
    "run_timing_benchmark",
    "run_dataset_size_study",
]
