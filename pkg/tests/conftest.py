"""Pytest configuration and fixtures for testing."""

import json
import shutil
import tempfile
from pathlib import Path

import numpy as np
import pytest

from config.settings import TestingConfig
from lorenz_shadow.flow_core import FlowSpec
from lorenz_shadow.flow_shadow import FlowConstants, derive_flow_constants
from lorenz_shadow.map_core import (
    AlphaSpec,
    LorenzMapSpec,
    MapConstants,
    derive_map_constants,
    eval_alpha_mu,
)
from lorenz_shadow.shadow_1d import Interval


REFERENCE_DOCUMENT = {
    "map": {
        "alpha": {"c": 1.95, "rho": 0.75},
        "beta": {"d": 0.3, "e_plus": 0.65, "e_minus": -0.65},
        "mu0": 0.02,
    },
    "flow": {"lambda1": 2.0, "lambda2": 5.0, "lambda3": 1.0, "tube_time": 1.0},
}


@pytest.fixture
def temp_config():
    """A TestingConfig subclass writing into a temporary directory."""
    temp_dir = Path(tempfile.mkdtemp())

    class TestConfig(TestingConfig):
        OUTPUT_DIR = temp_dir / 'runs'
        LOGS_DIR = temp_dir / 'logs'

    TestConfig.init_dirs()

    yield TestConfig

    shutil.rmtree(temp_dir, ignore_errors=True)


@pytest.fixture
def reference_spec():
    """The reference map c=1.95, rho=0.75, d=0.3, e=+-0.65, mu0=0.02."""
    return LorenzMapSpec()


@pytest.fixture
def failing_spec():
    """c=2.2 pushes alpha(1) to 1.2, outside the square."""
    return LorenzMapSpec(alpha=AlphaSpec(c=2.2, rho=0.75))


@pytest.fixture(scope='session')
def map_constants() -> MapConstants:
    """Map constants for epsilon = 0.64."""
    return derive_map_constants(LorenzMapSpec(), 0.64)


@pytest.fixture(scope='session')
def small_map_constants() -> MapConstants:
    """Map constants for epsilon = 0.32."""
    return derive_map_constants(LorenzMapSpec(), 0.32)


@pytest.fixture
def flow_spec():
    """Reference hybrid flow lambda = (2, 5, 1), tube_time = 1."""
    return FlowSpec()


@pytest.fixture(scope='session')
def flow_constants() -> FlowConstants:
    """Flow constants for epsilon = 0.6 (derived once per session)."""
    return derive_flow_constants(FlowSpec(), 0.6)


@pytest.fixture
def reference_document():
    return json.loads(json.dumps(REFERENCE_DOCUMENT))


@pytest.fixture
def write_config(tmp_path):
    """Write an experiment document to a file and return its path."""
    def _write(doc, name='experiment.json'):
        path = tmp_path / name
        path.write_text(json.dumps(doc), encoding='utf-8')
        return path
    return _write


# Test utilities

def assert_pseudo_orbit_1d(spec, points, mu, delta):
    """Every step of a 1d sequence is within delta of the shifted image."""
    for n in range(len(points) - 1):
        x = float(points[n])
        if x == 0.0:
            assert min(abs(points[n + 1] - 1.0), abs(points[n + 1] + 1.0)) <= delta * (1 + 1e-9)
        else:
            assert abs(eval_alpha_mu(spec, mu, x) - points[n + 1]) <= delta * (1 + 1e-9) + 1e-15


def assert_strictly_increasing(values):
    values = np.asarray(values)
    assert np.all(np.diff(values) > 0.0)


def assert_nested(inner: Interval, outer: Interval, slack: float = 1e-10):
    assert outer.contains_interval(inner, slack)


def assert_close(a, b, tol=1e-9):
    assert abs(a - b) <= tol, f"{a!r} != {b!r} within {tol}"


# Custom pytest markers

def pytest_configure(config):
    """Configure custom pytest markers."""
    config.addinivalue_line(
        "markers", "slow: marks tests as slow (deselect with '-m \"not slow\"')"
    )
    config.addinivalue_line(
        "markers", "integration: marks tests as integration tests"
    )
    config.addinivalue_line(
        "markers", "flow: marks tests that need the derived flow constants"
    )
    config.addinivalue_line(
        "markers", "cli: marks tests that drive the command line interface"
    )
