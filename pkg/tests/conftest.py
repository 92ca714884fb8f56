import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from memcontrol.resolvent import MemoryKernel, SpectralSystem

settings.register_profile(
    "repo", max_examples=40, deadline=None, derandomize=True, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("repo")

_CRITERIA: dict[int, str] = {}


@pytest.fixture
def report_criterion():
    """Record one PASS/FAIL line per acceptance criterion for the terminal summary."""

    def record(number: int, title: str, passed: bool, detail: str):
        line = f"criterion {number:2d} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
        _CRITERIA[number] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        terminalreporter.write_line(_CRITERIA[number])


@pytest.fixture(scope="session")
def kernel():
    return MemoryKernel(1.0, 0.5, 0.5)


@pytest.fixture(scope="session")
def system8():
    return SpectralSystem(8)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
