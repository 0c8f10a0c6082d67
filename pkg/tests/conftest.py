import os
import sys

import pytest
from hypothesis import HealthCheck, settings

from paw.model import Instance

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.register_profile("thorough", max_examples=500, deadline=None)
settings.load_profile(os.environ.get("PAW_HYPOTHESIS_PROFILE", "default"))


def scarce_instance() -> Instance:
    """Three patients, a cheap hospital nobody values and an expensive one."""
    return Instance((500, 3000), ((0, 10), (0, 7), (0, 3)), 6000)


def correlated_instance(budget: int, swapped: bool) -> Instance:
    """Two patients whose per-hospital value distributions agree in both variants."""
    if swapped:
        values = ((10, 6), (4, 0))
    else:
        values = ((10, 0), (4, 6))
    return Instance((budget - 1, 1), values, budget)


@pytest.fixture
def scarce():
    return scarce_instance()


@pytest.fixture
def correlated():
    return correlated_instance(10, swapped=False), correlated_instance(10, swapped=True)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
