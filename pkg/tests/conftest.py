"""
Shared test fixtures and configurations for all tests.
Environment overrides are pinned before any config module is imported.
"""

import os

import numpy as np
import pytest

# ========== CRITICAL: Set environment FIRST ==========
os.environ["GRIDPRICE_THREAD_BUDGET"] = "1"
os.environ.pop("GRIDPRICE_OUTPUT_DIR", None)

from services import load_case  # noqa: E402

from tests.grids import (  # noqa: E402
    CASE30_PATH,
    make_dataset,
    triangle_grid,
    two_bus_grid,
    two_bus_text,
)


@pytest.fixture
def two_bus():
    """Uncongested two-bus grid with a 50 MW load."""
    return two_bus_grid()


@pytest.fixture
def two_bus_case_text():
    return two_bus_text()


@pytest.fixture
def triangle():
    """Triangle grid whose 1-3 line binds at 30 MW."""
    return triangle_grid()


@pytest.fixture(scope="session")
def case30_path():
    return CASE30_PATH


@pytest.fixture(scope="session")
def case30_text():
    return CASE30_PATH.read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def case30():
    return load_case(CASE30_PATH)


@pytest.fixture
def regression_data():
    """Smooth multi-output regression problem: 200 rows, 6 features, 3 outputs."""
    rng = np.random.default_rng(7)
    X = rng.uniform(-1.0, 1.0, size=(200, 6))
    Y = np.column_stack(
        [
            20.0 + 3.0 * X[:, 0] + np.sin(3.0 * X[:, 1]),
            25.0 + 2.0 * X[:, 2] * X[:, 3],
            30.0 + np.where(X[:, 4] > 0.0, 4.0, -4.0) + 0.5 * X[:, 5],
        ]
    )
    return X, Y


@pytest.fixture
def synthetic_dataset():
    """Dataset whose 3 price columns depend on 6 feature columns (3 buses)."""
    rng = np.random.default_rng(11)
    X = rng.uniform(10.0, 50.0, size=(120, 6))
    Y = np.column_stack(
        [
            10.0 + 0.1 * X[:, 0],
            15.0 + 0.2 * X[:, 1] + 0.05 * X[:, 3],
            20.0 + 0.3 * X[:, 2],
        ]
    )
    return make_dataset(X, Y)


@pytest.fixture
def output_dir(tmp_path):
    """Temporary directory for run outputs."""
    path = tmp_path / "runs"
    path.mkdir()
    return path
