from enum import Enum, IntEnum
from typing import Dict, List, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


# ========== Grid model ==========


class BusKind(str, Enum):
    """Role of a bus, taken from the MATPOWER bus-type column."""

    LOAD = "load"
    GENERATOR = "generator-capable"
    REFERENCE = "reference"


class Bus(BaseModel):
    """A node of the grid holding its base active demand."""

    model_config = ConfigDict(frozen=True)

    id: int = Field(..., description="Bus id as written in the case file", gt=0)
    kind: BusKind = Field(..., description="Bus role")
    base_demand_mw: float = Field(..., description="Base active demand (MW)")


class Generator(BaseModel):
    """A dispatchable unit with a convex polynomial cost curve."""

    model_config = ConfigDict(frozen=True)

    at_bus: int = Field(..., description="Id of the bus the unit is connected to")
    p_min_mw: float = Field(..., description="Minimum active output (MW)")
    p_max_mw: float = Field(..., description="Maximum active output (MW)")
    cost_c2: float = Field(default=0.0, description="Quadratic cost ($/MW^2h)")
    cost_c1: float = Field(default=0.0, description="Linear cost ($/MWh)")
    cost_c0: float = Field(default=0.0, description="Fixed cost ($/h)")
    in_service: bool = Field(default=True)


class Branch(BaseModel):
    """A transmission line or transformer seen through the DC approximation."""

    model_config = ConfigDict(frozen=True)

    from_bus: int
    to_bus: int
    reactance_pu: float = Field(..., description="Series reactance (per unit)")
    rate_a_mw: float = Field(
        default=0.0, description="Long-term rating (MW); 0 means unlimited"
    )
    in_service: bool = Field(default=True)

    @property
    def is_limited(self) -> bool:
        return self.rate_a_mw > 0.0


class GridCase(BaseModel):
    """Immutable snapshot of a grid. Buses are kept sorted by ascending id."""

    model_config = ConfigDict(frozen=True)

    name: str = Field(default="grid")
    base_mva: float = Field(..., gt=0.0)
    buses: Tuple[Bus, ...]
    generators: Tuple[Generator, ...]
    branches: Tuple[Branch, ...]

    @field_validator("buses")
    @classmethod
    def _sort_buses(cls, buses: Tuple[Bus, ...]) -> Tuple[Bus, ...]:
        return tuple(sorted(buses, key=lambda bus: bus.id))

    @property
    def n_buses(self) -> int:
        return len(self.buses)

    @property
    def bus_ids(self) -> List[int]:
        return [bus.id for bus in self.buses]

    def bus_index(self) -> Dict[int, int]:
        """Map bus id to its dense index (ascending id order)."""
        return {bus.id: idx for idx, bus in enumerate(self.buses)}

    def reference_indices(self) -> List[int]:
        return [
            idx for idx, bus in enumerate(self.buses) if bus.kind == BusKind.REFERENCE
        ]

    def in_service_generators(self) -> List[int]:
        return [idx for idx, gen in enumerate(self.generators) if gen.in_service]

    def in_service_branches(self) -> List[int]:
        return [idx for idx, br in enumerate(self.branches) if br.in_service]


class ValidationReport(BaseModel):
    """Findings of a grid validation. Warnings never affect validity."""

    violations: List[str] = Field(default_factory=list)
    warnings: List[str] = Field(default_factory=list)

    @property
    def is_valid(self) -> bool:
        return not self.violations


class ModificationKind(str, Enum):
    NONE = "none"
    DERATE_ALL_BRANCHES = "derate_all_branches"
    REMOVE_BRANCH = "remove_branch"
    REMOVE_GENERATOR = "remove_generator"


class Modification(BaseModel):
    """An edit applied to a grid to model maintenance or an outage."""

    model_config = ConfigDict(frozen=True)

    kind: ModificationKind = ModificationKind.NONE
    fraction: Optional[float] = Field(default=None, gt=0.0, lt=1.0)
    index: Optional[int] = Field(default=None, ge=0)

    @model_validator(mode="after")
    def _check_arguments(self) -> "Modification":
        if self.kind == ModificationKind.DERATE_ALL_BRANCHES:
            if self.fraction is None:
                raise ValueError("derate_all_branches requires a fraction")
        elif self.kind in (
            ModificationKind.REMOVE_BRANCH,
            ModificationKind.REMOVE_GENERATOR,
        ):
            if self.index is None:
                raise ValueError(f"{self.kind.value} requires an index")
        return self

    @classmethod
    def none(cls) -> "Modification":
        return cls(kind=ModificationKind.NONE)

    @classmethod
    def derate_all_branches(cls, fraction: float) -> "Modification":
        return cls(kind=ModificationKind.DERATE_ALL_BRANCHES, fraction=fraction)

    @classmethod
    def remove_branch(cls, index: int) -> "Modification":
        return cls(kind=ModificationKind.REMOVE_BRANCH, index=index)

    @classmethod
    def remove_generator(cls, index: int) -> "Modification":
        return cls(kind=ModificationKind.REMOVE_GENERATOR, index=index)


# ========== DC-OPF ==========


class QpStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    ITERATION_LIMIT = "iteration_limit"
    NUMERICAL_FAILURE = "numerical_failure"


class SolverStats(BaseModel):
    iterations: int = 0
    duality_gap: float = 0.0


class OpfSolution(BaseModel):
    """Primal and dual result of one DC-OPF solve.

    Per-generator and per-branch entries follow the grid's element order;
    out-of-service elements report zero.
    """

    dispatch_mw: List[float]
    angle_rad: List[float]
    flow_mw: List[float]
    lmp: List[float] = Field(..., description="Locational marginal prices ($/MWh)")
    objective: float = Field(..., description="Total cost ($/h)")
    stats: SolverStats
    status: QpStatus

    @property
    def is_optimal(self) -> bool:
        return self.status == QpStatus.OPTIMAL


# ========== Scenario generation ==========


class ContingencyCase(IntEnum):
    """Test cases: the base grid plus three contingency families."""

    BASE = 1
    DERATE10 = 2
    LINE_OUT = 3
    GEN_OUT = 4

    @property
    def label(self) -> str:
        return {
            ContingencyCase.BASE: "base",
            ContingencyCase.DERATE10: "derate10",
            ContingencyCase.LINE_OUT: "line_out",
            ContingencyCase.GEN_OUT: "gen_out",
        }[self]


class PerturbationSpec(BaseModel):
    """Range of the grid-wide perturbation (percent) and the nodal noise band."""

    model_config = ConfigDict(frozen=True)

    s_grid_min: float
    s_grid_max: float
    nodal_noise_low: float = Field(default=0.9, gt=0.0)
    nodal_noise_high: float = Field(default=1.1, gt=0.0)

    @model_validator(mode="after")
    def _check_ranges(self) -> "PerturbationSpec":
        if self.s_grid_min > self.s_grid_max:
            raise ValueError("s_grid_min must not exceed s_grid_max")
        if not self.nodal_noise_low < self.nodal_noise_high:
            raise ValueError("nodal_noise_low must be below nodal_noise_high")
        return self


class ScenarioConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    n_instances: int = Field(..., gt=0)
    perturbation: PerturbationSpec
    test_case: ContingencyCase = ContingencyCase.BASE
    seed: int = Field(default=0, ge=0, lt=2**64)
    max_resamples: int = Field(default=100, ge=0)


class DatasetMetadata(BaseModel):
    """Provenance of a generated dataset."""

    grid_name: str
    grid_hash: str
    bus_ids: List[int]
    config: ScenarioConfig
    s_grid: List[float]
    contingencies: List[Modification]
    resamples: List[int]
    rng: str = "numpy.PCG64+SeedSequence"


# ========== Surrogate models ==========


class ModelKind(str, Enum):
    DTR = "DTR"
    RFR = "RFR"
    GBR = "GBR"
    MLP = "MLP"


class TreeHyper(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    max_leaf_nodes: int = Field(default=110, ge=1)
    min_samples_leaf: int = Field(default=1, ge=1)
    min_samples_split: int = Field(default=2, ge=2)


class ForestHyper(TreeHyper):
    n_estimators: int = Field(default=100, gt=0)
    bootstrap: bool = True


class GbrHyper(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    learning_rate: float = Field(default=0.1, gt=0.0, le=1.0)
    max_depth: int = Field(default=2, ge=1)
    n_estimators: int = Field(default=100, ge=0)
    subsample: float = Field(default=1.0, gt=0.0, le=1.0)


class MlpHyper(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    hidden_layers: List[int] = Field(default_factory=lambda: [128])
    learning_rate: float = Field(default=1e-3, gt=0.0)
    batch_size: int = Field(default=128, gt=0)
    max_epochs: int = Field(default=300, ge=1)
    patience: int = Field(default=20, ge=1)
    validation_fraction: float = Field(default=0.1, ge=0.0, lt=1.0)

    @field_validator("hidden_layers")
    @classmethod
    def _positive_widths(cls, widths: List[int]) -> List[int]:
        if any(width <= 0 for width in widths):
            raise ValueError("hidden layer widths must be positive")
        return widths


Hyper = Union[TreeHyper, ForestHyper, GbrHyper, MlpHyper]

_HYPER_BY_KIND = {
    ModelKind.DTR: TreeHyper,
    ModelKind.RFR: ForestHyper,
    ModelKind.GBR: GbrHyper,
    ModelKind.MLP: MlpHyper,
}


def hyper_class(kind: ModelKind) -> type:
    return _HYPER_BY_KIND[ModelKind(kind)]


class ModelSpec(BaseModel):
    """A named surrogate configuration, e.g. ``NN-1`` = MLP with one hidden layer."""

    model_config = ConfigDict(frozen=True)

    name: str
    kind: ModelKind
    hyper: Hyper

    @model_validator(mode="before")
    @classmethod
    def _coerce_hyper(cls, data):
        if isinstance(data, dict) and "kind" in data:
            expected = hyper_class(data["kind"])
            hyper = data.get("hyper", {})
            if isinstance(hyper, BaseModel):
                hyper = hyper.model_dump()
            data = {**data, "hyper": expected.model_validate(hyper or {})}
        return data

    @model_validator(mode="after")
    def _check_hyper_kind(self) -> "ModelSpec":
        if type(self.hyper) is not hyper_class(self.kind):
            raise ValueError(f"hyper-parameters do not match model kind {self.kind}")
        return self


# ========== Reports ==========


class CaseResult(BaseModel):
    test_case: str
    n_test_rows: int
    mape_per_repeat: List[float]
    mean_mape: float
    std_mape: float


class ModelEvaluation(BaseModel):
    model: str
    kind: ModelKind
    results: List[CaseResult]


class Provenance(BaseModel):
    grid_name: str
    grid_hash: str
    train_dataset_hash: Optional[str] = None
    test_dataset_hashes: Dict[str, str] = Field(default_factory=dict)
    base_seed: int = 0
    model_seeds: List[int] = Field(default_factory=list)


class EvalReport(BaseModel):
    repeats: int = Field(..., ge=1)
    models: List[ModelEvaluation]
    provenance: Provenance


class EnvironmentInfo(BaseModel):
    cpu: str
    machine: str
    python: str
    cpu_count: int
    thread_count: int = 1


class TimingRow(BaseModel):
    model: str
    training_seconds: float
    processing_seconds: float
    speedup: float


class TimingReport(BaseModel):
    grid_name: str
    n_instances: int
    solver_seconds: float
    models: List[TimingRow]
    environment: EnvironmentInfo


class StudyEntry(BaseModel):
    model: str
    size: int
    mape_per_repeat: List[float]
    mean_mape: float
    std_mape: float


class StudyReport(BaseModel):
    grid_name: str
    sizes: List[int]
    repeats: int
    entries: List[StudyEntry]
    provenance: Provenance
