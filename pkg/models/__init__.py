from .schemas import (
    Bus,
    BusKind,
    Branch,
    CaseResult,
    ContingencyCase,
    DatasetMetadata,
    EnvironmentInfo,
    EvalReport,
    ForestHyper,
    GbrHyper,
    Generator,
    GridCase,
    MlpHyper,
    ModelEvaluation,
    ModelKind,
    ModelSpec,
    Modification,
    ModificationKind,
    OpfSolution,
    PerturbationSpec,
    Provenance,
    QpStatus,
    ScenarioConfig,
    SolverStats,
    StudyEntry,
    StudyReport,
    TimingReport,
    TimingRow,
    TreeHyper,
    ValidationReport,
    hyper_class,
)

__all__ = [
    "Bus",
    "BusKind",
    "Branch",
    "CaseResult",
    "ContingencyCase",
    "DatasetMetadata",
    "EnvironmentInfo",
    "EvalReport",
    "ForestHyper",
    "GbrHyper",
    "Generator",
    "GridCase",
    "MlpHyper",
    "ModelEvaluation",
    "ModelKind",
    "ModelSpec",
    "Modification",
    "ModificationKind",
    "OpfSolution",
    "PerturbationSpec",
    "Provenance",
    "QpStatus",
    "ScenarioConfig",
    "SolverStats",
    "StudyEntry",
    "StudyReport",
    "TimingReport",
    "TimingRow",
    "TreeHyper",
    "ValidationReport",
    "hyper_class",
]
