from .settings import settings, Settings
from .presets import PRESETS, MODEL_NAMES, GridPreset, preset_for, model_specs
from .run_config import RunConfig, load_run_config, write_effective_config

__all__ = [
    "settings",
    "Settings",
    "PRESETS",
    "MODEL_NAMES",
    "GridPreset",
    "preset_for",
    "model_specs",
    "RunConfig",
    "load_run_config",
    "write_effective_config",
]
