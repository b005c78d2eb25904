import functools

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from twistor.geometry import GridSpec, constant_curvature_metric
from twistor.polar import PolarGrid

settings.register_profile("twistor", deadline=None, max_examples=25, derandomize=True,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("twistor")

# acceptance lines collected by tests/test_acceptance.py, echoed after the run
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)


SMALL = GridSpec(n_r=12, n_theta=48, k_max=16, quad_nodes=32)


@pytest.fixture(scope="session")
def small_spec():
    return SMALL


@pytest.fixture(scope="session")
def small_grid():
    return PolarGrid(1.0, SMALL.n_r, SMALL.n_theta)


@functools.lru_cache(maxsize=None)
def pipeline_map(kappa: float, spec: GridSpec = SMALL):
    from twistor.beta import beta_extension

    return beta_extension(constant_curvature_metric(kappa), spec)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
