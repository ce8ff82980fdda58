import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from finslercheck import FinslerMetric, SampleConfig, sample_points

settings.register_profile("dev", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", max_examples=300, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "dev"))

CONFORMAL_PHI = "0.5*x1 + 0.2*x2^2"


@pytest.fixture(scope="session")
def euclidean():
    return FinslerMetric.euclidean(2)


@pytest.fixture(scope="session")
def randers():
    return FinslerMetric.randers([[1.0, 0.0], [0.0, 1.0]], [0.5, 0.0])


@pytest.fixture(scope="session")
def conformal():
    return FinslerMetric.conformal(CONFORMAL_PHI, 2)


@pytest.fixture(scope="session")
def samples():
    return sample_points(SampleConfig(seed=0, count=200))


@pytest.fixture(scope="session")
def samples3():
    return sample_points(SampleConfig.cube(3, seed=0, count=200))


@pytest.fixture(scope="session")
def few():
    return sample_points(SampleConfig(seed=3, count=20))


def maxabs(a):
    return float(np.max(np.abs(a)))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[k])
