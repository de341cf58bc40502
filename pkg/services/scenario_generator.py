import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from models import (
    ContingencyCase,
    DatasetMetadata,
    GridCase,
    Modification,
    OpfSolution,
    ScenarioConfig,
)

from .dcopf import solve_dcopf
from .exceptions import (
    ContingencyImpossibleError,
    DatasetGenerationError,
    GridValidationError,
)
from .grid_model import apply_modification, base_demand, grid_hash, is_connected, require_valid
from .qp_solver import InteriorPointSolver
from .seeding import (
    PURPOSE_CONTINGENCY,
    PURPOSE_NODAL,
    PURPOSE_S_GRID,
    RNG_IDENTIFIER,
    derive_rng,
)

logger = logging.getLogger(__name__)

DERATE_FRACTION = 0.10
CSV_FLOAT_FORMAT = "%.17g"


# ========== Per-instance building blocks ==========


def perturb_demands(
    base: np.ndarray,
    s_grid: float,
    rng: np.random.Generator,
    noise_low: float = 0.9,
    noise_high: float = 1.1,
) -> np.ndarray:
    """
    Apply a grid-wide percentage change with per-bus noise.

    ``result_i = base_i * (1 + s_grid * u_i / 100)`` with
    ``u_i ~ Uniform(noise_low, noise_high)`` drawn in bus-index order.
    """
    base = np.asarray(base, dtype=float)
    nodal = rng.uniform(noise_low, noise_high, size=base.shape[0])
    return base * (1.0 + s_grid * nodal / 100.0)


def capacity_totals(grid: GridCase) -> np.ndarray:
    """Sum of finite ratings over in-service branches incident to each bus (MW)."""
    index = grid.bus_index()
    totals = np.zeros(grid.n_buses)
    for br in grid.branches:
        if br.in_service and br.is_limited:
            totals[index[br.from_bus]] += br.rate_a_mw
            totals[index[br.to_bus]] += br.rate_a_mw
    return totals


def extract_features(grid: GridCase, demand) -> np.ndarray:
    """
    Feature vector ``[P_d by bus index..., P_d / P_l^max by bus index...]``.

    Buses without any limited in-service branch get a capacity factor of 0.
    """
    demand = np.asarray(demand, dtype=float)
    totals = capacity_totals(grid)
    factor = np.divide(demand, totals, out=np.zeros_like(demand), where=totals > 0)
    return np.concatenate([demand, factor])


def feature_names(ids: List[int]) -> List[str]:
    return [f"Pd_{i}" for i in ids] + [f"Pl_{i}" for i in ids]


def target_names(ids: List[int]) -> List[str]:
    return [f"lmp_{i}" for i in ids]


def make_contingency(
    grid: GridCase,
    test_case: ContingencyCase,
    rng: np.random.Generator,
    max_resamples: int = 100,
) -> Tuple[GridCase, Modification]:
    """
    Draw the grid edit belonging to a test case.

    Raises:
        ContingencyImpossibleError: no connected single-line outage found
            within ``max_resamples`` draws, or nothing left to remove
    """
    test_case = ContingencyCase(test_case)

    if test_case == ContingencyCase.BASE:
        return grid, Modification.none()

    if test_case == ContingencyCase.DERATE10:
        modification = Modification.derate_all_branches(DERATE_FRACTION)
        return apply_modification(grid, modification), modification

    if test_case == ContingencyCase.LINE_OUT:
        candidates = grid.in_service_branches()
        if not candidates:
            raise ContingencyImpossibleError("grid has no in-service branch to remove")
        for _ in range(max_resamples + 1):
            modification = Modification.remove_branch(int(rng.choice(candidates)))
            edited = apply_modification(grid, modification)
            if is_connected(edited):
                return edited, modification
        raise ContingencyImpossibleError(
            f"no single-line outage keeps '{grid.name}' connected "
            f"after {max_resamples} resamples"
        )

    candidates = grid.in_service_generators()
    if len(candidates) <= 1:
        raise ContingencyImpossibleError("cannot remove the only in-service generator")
    modification = Modification.remove_generator(int(rng.choice(candidates)))
    return apply_modification(grid, modification), modification


# ========== Dataset ==========


@dataclass
class Dataset:
    """Feature matrix paired with LMP targets and provenance."""

    features: np.ndarray
    targets: np.ndarray
    metadata: DatasetMetadata

    def __post_init__(self):
        if self.features.shape[0] != self.targets.shape[0]:
            raise ValueError("features and targets have different row counts")
        if self.features.shape[1] != 2 * self.targets.shape[1]:
            raise ValueError("features must hold two columns per target bus")

    @property
    def n_instances(self) -> int:
        return self.features.shape[0]

    @property
    def n_buses(self) -> int:
        return self.targets.shape[1]

    @property
    def demands(self) -> np.ndarray:
        return self.features[:, : self.n_buses]

    def head(self, n: int) -> "Dataset":
        """The first ``n`` instances; prefixes of one dataset are nested."""
        if not 0 < n <= self.n_instances:
            raise ValueError(f"head({n}) outside 1..{self.n_instances}")
        meta = self.metadata
        return Dataset(
            features=self.features[:n].copy(),
            targets=self.targets[:n].copy(),
            metadata=meta.model_copy(
                update={
                    "config": meta.config.model_copy(update={"n_instances": n}),
                    "s_grid": meta.s_grid[:n],
                    "contingencies": meta.contingencies[:n],
                    "resamples": meta.resamples[:n],
                }
            ),
        )

    def content_hash(self) -> str:
        digest = hashlib.sha256()
        digest.update(np.ascontiguousarray(self.features, dtype="<f8").tobytes())
        digest.update(np.ascontiguousarray(self.targets, dtype="<f8").tobytes())
        digest.update(self.metadata.model_dump_json().encode("utf-8"))
        return digest.hexdigest()


@dataclass
class _InstanceResult:
    features: np.ndarray
    lmp: np.ndarray
    s_grid: float
    modification: Modification
    resamples: int


class ScenarioGenerator:
    """Builds labelled datasets by perturbing a grid and solving each instance."""

    def __init__(
        self,
        grid: GridCase,
        solver: Optional[InteriorPointSolver] = None,
        n_jobs: int = 1,
    ):
        """
        Initialize the generator.

        Args:
            grid: Base grid (validated here)
            solver: Interior-point solver to use for every instance
            n_jobs: joblib worker count; results never depend on it
        """
        require_valid(grid)
        self.grid = grid
        self.solver = solver or InteriorPointSolver()
        self.n_jobs = n_jobs
        self._base = base_demand(grid)

    def instance(self, config: ScenarioConfig, j: int) -> _InstanceResult:
        """Generate instance ``j``, resampling infeasible draws."""
        spec = config.perturbation
        status = None
        for attempt in range(config.max_resamples + 1):
            s_grid = float(
                derive_rng(config.seed, j, attempt, PURPOSE_S_GRID).uniform(
                    spec.s_grid_min, spec.s_grid_max
                )
            )
            grid, modification = make_contingency(
                self.grid,
                config.test_case,
                derive_rng(config.seed, j, attempt, PURPOSE_CONTINGENCY),
                config.max_resamples,
            )
            demand = perturb_demands(
                self._base,
                s_grid,
                derive_rng(config.seed, j, attempt, PURPOSE_NODAL),
                spec.nodal_noise_low,
                spec.nodal_noise_high,
            )
            solution = solve_dcopf(grid, demand, solver=self.solver, check=False)
            if solution.is_optimal:
                return _InstanceResult(
                    features=extract_features(grid, demand),
                    lmp=np.asarray(solution.lmp),
                    s_grid=s_grid,
                    modification=modification,
                    resamples=attempt,
                )
            status = solution.status.value
            logger.warning(f"Instance {j} attempt {attempt} is {status}; resampling")

        logger.error(f"Instance {j} exhausted {config.max_resamples} resamples")
        raise DatasetGenerationError(
            f"instance {j}: no optimal scenario within {config.max_resamples} resamples",
            instance=j,
            status=status,
        )

    def generate(self, config: ScenarioConfig) -> Dataset:
        """
        Generate ``config.n_instances`` labelled instances.

        Args:
            config: Perturbation range, test case, seed and budget

        Returns:
            Dataset ordered by instance index
        """
        logger.info(
            f"Generating {config.n_instances} instances of '{self.grid.name}' "
            f"(test case {config.test_case.label}, seed {config.seed})"
        )
        results = Parallel(n_jobs=self.n_jobs, prefer="threads")(
            delayed(self.instance)(config, j) for j in range(config.n_instances)
        )

        metadata = DatasetMetadata(
            grid_name=self.grid.name,
            grid_hash=grid_hash(self.grid),
            bus_ids=self.grid.bus_ids,
            config=config,
            s_grid=[r.s_grid for r in results],
            contingencies=[r.modification for r in results],
            resamples=[r.resamples for r in results],
            rng=RNG_IDENTIFIER,
        )
        dataset = Dataset(
            features=np.vstack([r.features for r in results]),
            targets=np.vstack([r.lmp for r in results]),
            metadata=metadata,
        )
        total = sum(metadata.resamples)
        logger.info(f"Generated dataset with {dataset.n_instances} rows ({total} resamples)")
        return dataset


def generate_dataset(
    grid: GridCase,
    config: ScenarioConfig,
    n_jobs: int = 1,
    solver: Optional[InteriorPointSolver] = None,
) -> Dataset:
    return ScenarioGenerator(grid, solver=solver, n_jobs=n_jobs).generate(config)


def replay_instance(
    grid: GridCase,
    dataset: Dataset,
    j: int,
    solver: Optional[InteriorPointSolver] = None,
) -> OpfSolution:
    """Re-solve stored instance ``j`` from its demand columns and contingency."""
    if dataset.metadata.grid_hash != grid_hash(grid):
        raise GridValidationError(
            f"dataset was generated for grid {dataset.metadata.grid_hash[:12]}, "
            f"not '{grid.name}'"
        )
    edited = apply_modification(grid, dataset.metadata.contingencies[j])
    return solve_dcopf(edited, dataset.demands[j], solver=solver, check=False)


# ========== Persistence ==========


def dataset_paths(directory, stem: str = "dataset") -> Tuple[Path, Path, Path]:
    directory = Path(directory)
    return (
        directory / f"{stem}_features.csv",
        directory / f"{stem}_targets.csv",
        directory / f"{stem}_meta.json",
    )


def save_dataset(dataset: Dataset, directory, stem: str = "dataset") -> Tuple[Path, Path, Path]:
    """
    Write features CSV, targets CSV and JSON metadata sidecar.

    Returns:
        Paths of the three files
    """
    features_path, targets_path, meta_path = dataset_paths(directory, stem)
    features_path.parent.mkdir(parents=True, exist_ok=True)
    ids = dataset.metadata.bus_ids

    pd.DataFrame(
        dataset.features, columns=feature_names(ids)
    ).to_csv(features_path, index=False, float_format=CSV_FLOAT_FORMAT)
    pd.DataFrame(dataset.targets, columns=target_names(ids)).to_csv(
        targets_path, index=False, float_format=CSV_FLOAT_FORMAT
    )
    meta = dataset.metadata.model_dump(mode="json")
    meta["content_hash"] = dataset.content_hash()
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True), encoding="utf-8")

    logger.info(f"Wrote dataset '{stem}' to {features_path.parent}")
    return features_path, targets_path, meta_path


def load_dataset(directory, stem: str = "dataset") -> Dataset:
    """Read a dataset written by ``save_dataset``."""
    features_path, targets_path, meta_path = dataset_paths(directory, stem)
    for path in (features_path, targets_path, meta_path):
        if not path.exists():
            raise FileNotFoundError(f"missing dataset file {path}")

    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    meta.pop("content_hash", None)
    metadata = DatasetMetadata.model_validate(meta)

    features = pd.read_csv(features_path, float_precision="round_trip")
    targets = pd.read_csv(targets_path, float_precision="round_trip")
    ids = metadata.bus_ids
    if list(features.columns) != feature_names(ids) or list(targets.columns) != target_names(ids):
        raise GridValidationError(f"dataset '{stem}' columns do not match its metadata")

    return Dataset(
        features=features.to_numpy(dtype=float),
        targets=targets.to_numpy(dtype=float),
        metadata=metadata,
    )
