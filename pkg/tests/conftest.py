"""
Test configuration and fixtures for LaserFlow
=============================================

Global pytest configuration and shared test fixtures. Model fixtures use
a coarse grid so the unit suite stays fast; acceptance tests on the
default grid live under ``tests/integration`` and are marked slow.
"""

import os
import tempfile
from pathlib import Path
from unittest.mock import patch

import numpy as np
import pytest

from src.core.discrete_model import discretize_zoh
from src.core.fundus_model import FundusGeometry, GridSettings, build_full_order_model
from src.core.model_reduction import ParamDomain, build_augmented_system, reduce
from src.estimators.augmented_model import AugmentedModel
from src.harness.config import RunConfig, parse_config

SMALL_NODES_PER_LAYER = (4, 3, 2, 6, 3)


@pytest.fixture
def temp_directory():
    """Create a temporary directory for tests."""
    with tempfile.TemporaryDirectory(prefix="laserflow_test_") as temp_dir:
        yield Path(temp_dir)


@pytest.fixture(scope="session")
def geometry():
    """Default porcine-eye geometry."""
    return FundusGeometry()


@pytest.fixture(scope="session")
def small_grid_settings():
    """Coarse grid: 12 radial x 12 axial unknowns."""
    return GridSettings(n_radial=12, n_inner=3, nodes_per_layer=SMALL_NODES_PER_LAYER)


@pytest.fixture(scope="session")
def domain():
    return ParamDomain(-0.5, 0.5)


@pytest.fixture(scope="session")
def small_model(geometry, small_grid_settings):
    """Full-order model on the coarse grid."""
    return build_full_order_model(geometry, small_grid_settings, k_b=8, k_c=8)


@pytest.fixture(scope="session")
def small_system(small_model, domain):
    return build_augmented_system(small_model, domain)


@pytest.fixture(scope="session")
def small_reduced(small_system):
    """Order-3 reduced model with the default state normalization."""
    return reduce(small_system, 3)


@pytest.fixture(scope="session")
def small_discrete(small_reduced):
    """ZOH model at 250 Hz."""
    return discretize_zoh(small_reduced)


@pytest.fixture(scope="session")
def augmented_model(small_discrete):
    return AugmentedModel(small_discrete, state_scale=1e-8)


@pytest.fixture
def small_config(temp_directory):
    """Short, coarse run configuration writing into a temporary directory."""
    return parse_config({
        "schema_version": 1,
        "grid": {"n_radial": 12, "n_inner": 3, "nodes_per_layer": list(SMALL_NODES_PER_LAYER)},
        "simulation": {"t_final": 0.2, "substeps": 2},
        "mhe": {"horizon": 2, "max_iterations": 20},
        "output": {"directory": str(temp_directory / "runs"), "run_name": "small"},
    })


@pytest.fixture
def default_config():
    return RunConfig()


@pytest.fixture
def mock_environment_variables(temp_directory):
    """Mock LaserFlow environment variables for testing."""
    env_vars = {
        "LASERFLOW_OUTPUT_ROOT": str(temp_directory / "env_runs"),
        "LASERFLOW_LOG_LEVEL": "DEBUG",
    }
    with patch.dict(os.environ, env_vars):
        yield env_vars


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_configure(config):
    """Configure pytest with custom markers."""
    config.addinivalue_line(
        "markers", "slow: marks tests as slow (deselect with '-m \"not slow\"')"
    )
    config.addinivalue_line(
        "markers", "integration: marks tests as integration tests"
    )
    config.addinivalue_line(
        "markers", "numerics: marks tests comparing against numerical oracles"
    )
