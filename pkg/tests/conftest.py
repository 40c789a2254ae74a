import numpy as np
import pytest

from wsindy.simulate import SIMULATORS


@pytest.fixture(scope="session")
def clean_data():
    """Lazily simulated default datasets, shared across the session."""
    cache = {}

    def get(system):
        if system not in cache:
            cache[system] = SIMULATORS[system]()
        return cache[system]

    return get


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_log():
    """Collects the one-line PASS/FAIL verdicts shown in the terminal summary."""
    return _ACCEPTANCE_LINES.append


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[0][1:])):
            terminalreporter.write_line(line)
