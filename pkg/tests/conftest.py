import numpy as np
import pytest

from wtbridge.coupled_solver import SimulationConfig, load_resources


@pytest.fixture(scope="session")
def resources():
    return load_resources(SimulationConfig())


@pytest.fixture(scope="session")
def bridge(resources):
    return resources[0]


@pytest.fixture(scope="session")
def coeffs(resources):
    return resources[1]


@pytest.fixture(scope="session")
def catalog(resources):
    return resources[2]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report():
    """Record one PASS/FAIL line for an acceptance criterion."""

    def _report(number, ok, detail):
        ACCEPTANCE_LINES.append(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
        print(ACCEPTANCE_LINES[-1])

    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
