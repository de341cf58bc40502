import logging
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ScalerParams:
    """Per-column training mean and population standard deviation.

    Constant columns get ``std = 1`` and are marked in ``constant``.
    """

    mean: np.ndarray
    std: np.ndarray
    constant: np.ndarray

    @property
    def n_features(self) -> int:
        return len(self.mean)


def fit_scaler(matrix: np.ndarray) -> ScalerParams:
    """
    Fit standardization statistics.

    Raises:
        ValueError: empty or non-2D matrix
    """
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] == 0 or matrix.shape[1] == 0:
        raise ValueError(f"cannot fit a scaler on a matrix of shape {matrix.shape}")

    mean = matrix.mean(axis=0)
    std = matrix.std(axis=0)
    constant = std <= 1e-12 * np.maximum(1.0, np.abs(mean))
    if np.any(constant):
        logger.warning(f"{int(constant.sum())} constant feature columns left unscaled")
    std = np.where(constant, 1.0, std)
    return ScalerParams(mean=mean, std=std, constant=constant)


def apply_scaler(params: ScalerParams, matrix: np.ndarray) -> np.ndarray:
    return (np.asarray(matrix, dtype=float) - params.mean) / params.std


def invert_scaler(params: ScalerParams, matrix: np.ndarray) -> np.ndarray:
    return np.asarray(matrix, dtype=float) * params.std + params.mean
