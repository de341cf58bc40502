import json
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from models import ContingencyCase, ModelSpec, PerturbationSpec, ScenarioConfig
from services.seeding import derive_seed

from .presets import MODEL_NAMES, model_specs, preset_for
from .settings import settings

# stream key separating test-set seeds from the training seed
TEST_SEED_STREAM = 2


class RunConfig(BaseModel):
    """Everything one command needs; unknown keys are rejected."""

    model_config = ConfigDict(extra="forbid")

    grid: str = Field(..., description="Path to a MATPOWER case file")
    s_grid_range: Optional[Tuple[float, float]] = Field(
        default=None, description="Grid-wide perturbation range (percent); preset if unset"
    )
    test_cases: List[int] = Field(default_factory=lambda: [1])
    n_instances: int = Field(default=5000, gt=0, description="Training rows")
    n_test_instances: int = Field(default=100, gt=0)
    bench_instances: int = Field(default=5000, ge=0)
    sizes: List[int] = Field(default_factory=lambda: [1000, 2000, 5000])
    seed: int = Field(default=0, ge=0, lt=2**64)
    max_resamples: int = Field(default=100, ge=0)
    models: List[str] = Field(default_factory=lambda: list(MODEL_NAMES))
    hyper_overrides: Dict[str, Dict[str, Any]] = Field(default_factory=dict)
    repeats: int = Field(default=10, ge=1)
    output_dir: Optional[str] = None
    thread_budget: Optional[int] = Field(default=None, ge=1)

    @field_validator("test_cases")
    @classmethod
    def _known_test_cases(cls, values: List[int]) -> List[int]:
        for value in values:
            ContingencyCase(value)
        if not values:
            raise ValueError("at least one test case is required")
        return values

    @field_validator("models")
    @classmethod
    def _known_models(cls, names: List[str]) -> List[str]:
        unknown = [name for name in names if name not in MODEL_NAMES]
        if unknown:
            raise ValueError(f"unknown models {unknown}; expected names from {MODEL_NAMES}")
        return names

    @model_validator(mode="after")
    def _check_range(self) -> "RunConfig":
        if self.s_grid_range is not None and self.s_grid_range[0] > self.s_grid_range[1]:
            raise ValueError("s_grid_range must be (min, max)")
        if any(b < a for a, b in zip(self.sizes, self.sizes[1:])):
            raise ValueError("sizes must be ascending")
        return self

    # ---------- resolution ----------

    def resolved_output_dir(self) -> Path:
        return Path(self.output_dir or settings.output_dir)

    def resolved_threads(self) -> int:
        return self.thread_budget or settings.thread_budget

    def perturbation(self, grid_name: str) -> PerturbationSpec:
        s_range = self.s_grid_range
        if s_range is None:
            preset = preset_for(grid_name)
            if preset is None:
                raise ValueError(
                    f"grid '{grid_name}' has no preset; set s_grid_range explicitly"
                )
            s_range = preset.s_grid_range
        return PerturbationSpec(s_grid_min=s_range[0], s_grid_max=s_range[1])

    def train_config(self, grid_name: str, n_instances: Optional[int] = None) -> ScenarioConfig:
        return ScenarioConfig(
            n_instances=n_instances or self.n_instances,
            perturbation=self.perturbation(grid_name),
            test_case=ContingencyCase.BASE,
            seed=self.seed,
            max_resamples=self.max_resamples,
        )

    def test_config(
        self, grid_name: str, test_case: int, n_instances: Optional[int] = None
    ) -> ScenarioConfig:
        return ScenarioConfig(
            n_instances=n_instances or self.n_test_instances,
            perturbation=self.perturbation(grid_name),
            test_case=ContingencyCase(test_case),
            seed=derive_seed(self.seed, TEST_SEED_STREAM, int(test_case)),
            max_resamples=self.max_resamples,
        )

    def model_specs(self, grid_name: str) -> List[ModelSpec]:
        return model_specs(grid_name, self.models, self.hyper_overrides)

    def effective(self) -> Dict[str, Any]:
        data = self.model_dump(mode="json")
        data["output_dir"] = str(self.resolved_output_dir())
        data["thread_budget"] = self.resolved_threads()
        return data


def load_run_config(path: Optional[str] = None, **overrides) -> RunConfig:
    """
    Read a JSON config file and apply non-None overrides on top.

    Raises:
        FileNotFoundError: config file missing
        pydantic.ValidationError: unknown keys or invalid values
    """
    data: Dict[str, Any] = {}
    if path is not None:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(data, dict):
            raise ValueError(f"config file {path} must hold a JSON object")
    data.update({key: value for key, value in overrides.items() if value is not None})
    return RunConfig.model_validate(data)


def write_effective_config(config: RunConfig, directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / "effective_config.json"
    path.write_text(json.dumps(config.effective(), indent=2, sort_keys=True), encoding="utf-8")
    return path
