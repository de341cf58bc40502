"""Per-grid defaults: perturbation ranges and model hyper-parameters."""

import re
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel

from models import ModelKind, ModelSpec

MODEL_NAMES = ("DTR", "RFR", "GBR", "NN-1", "NN-2")


class GridPreset(BaseModel):
    name: str
    s_grid_range: Tuple[float, float]
    specs: Dict[str, ModelSpec]

    def spec(self, name: str) -> ModelSpec:
        if name not in self.specs:
            raise ValueError(f"unknown model '{name}'; expected one of {sorted(self.specs)}")
        return self.specs[name]


def _specs(dtr, rfr, gbr, nn1, nn2) -> Dict[str, ModelSpec]:
    max_leaf, min_leaf, min_split = dtr
    f_leaf, f_min_leaf, f_min_split, f_trees = rfr
    lr, depth, stages, subsample = gbr

    def mlp(name, topology, rate, batch):
        return ModelSpec(
            name=name,
            kind=ModelKind.MLP,
            hyper={"hidden_layers": topology, "learning_rate": rate, "batch_size": batch},
        )

    return {
        "DTR": ModelSpec(
            name="DTR",
            kind=ModelKind.DTR,
            hyper={
                "max_leaf_nodes": max_leaf,
                "min_samples_leaf": min_leaf,
                "min_samples_split": min_split,
            },
        ),
        "RFR": ModelSpec(
            name="RFR",
            kind=ModelKind.RFR,
            hyper={
                "max_leaf_nodes": f_leaf,
                "min_samples_leaf": f_min_leaf,
                "min_samples_split": f_min_split,
                "n_estimators": f_trees,
            },
        ),
        "GBR": ModelSpec(
            name="GBR",
            kind=ModelKind.GBR,
            hyper={
                "learning_rate": lr,
                "max_depth": depth,
                "n_estimators": stages,
                "subsample": subsample,
            },
        ),
        "NN-1": mlp("NN-1", *nn1),
        "NN-2": mlp("NN-2", *nn2),
    }


PRESETS: Dict[str, GridPreset] = {
    "case30": GridPreset(
        name="case30",
        s_grid_range=(-30.0, 30.0),
        specs=_specs(
            dtr=(110, 130, 120),
            rfr=(100, 100, 140, 100),
            gbr=(0.09, 2, 1500, 0.2),
            nn1=([128], 0.009, 128),
            nn2=([512, 32], 0.008, 32),
        ),
    ),
    "case240": GridPreset(
        name="case240",
        s_grid_range=(-70.0, -10.0),
        specs=_specs(
            dtr=(60, 190, 170),
            rfr=(170, 180, 180, 700),
            gbr=(0.09, 2, 1600, 0.1),
            nn1=([128, 64], 0.006, 128),
            nn2=([128, 32, 32], 0.005, 128),
        ),
    ),
    "case1354": GridPreset(
        name="case1354",
        s_grid_range=(-50.0, 0.0),
        specs=_specs(
            dtr=(60, 190, 170),
            rfr=(30, 190, 70, 300),
            gbr=(0.01, 4, 200, 0.1),
            nn1=([128, 64], 0.004, 128),
            nn2=([128, 32, 16], 0.005, 128),
        ),
    ),
    "case1888": GridPreset(
        name="case1888",
        s_grid_range=(-40.0, 10.0),
        specs=_specs(
            dtr=(110, 130, 120),
            rfr=(60, 190, 170, 1200),
            gbr=(0.08, 2, 1800, 0.1),
            nn1=([4096, 512, 32], 0.001, 128),
            nn2=([4096, 2048, 512, 32], 0.001, 128),
        ),
    ),
}

DEFAULT_PRESET = "case30"

_CASE_RE = re.compile(r"case(\d+)", re.IGNORECASE)


def preset_for(grid_name: str) -> Optional[GridPreset]:
    """Preset whose ``case<N>`` matches the grid name, if any."""
    match = _CASE_RE.search(grid_name or "")
    if match is None:
        return None
    return PRESETS.get(f"case{match.group(1)}")


def model_specs(
    grid_name: str,
    names: List[str],
    overrides: Optional[Dict[str, dict]] = None,
) -> List[ModelSpec]:
    """
    Resolve model names to specs, falling back to the case30 values for
    grids without a preset, and apply per-model hyper-parameter overrides.
    """
    preset = preset_for(grid_name) or PRESETS[DEFAULT_PRESET]
    overrides = overrides or {}
    unknown = set(overrides) - set(names)
    if unknown:
        raise ValueError(f"overrides given for unselected models: {sorted(unknown)}")

    specs = []
    for name in names:
        base = preset.spec(name)
        hyper = {**base.hyper.model_dump(), **overrides.get(name, {})}
        specs.append(ModelSpec(name=name, kind=base.kind, hyper=hyper))
    return specs
