import numpy as np
import pytest

from spvtrap.config import table2
from spvtrap.ddsolver import solve_equilibrium


@pytest.fixture(scope="session")
def ms():
    return table2()


@pytest.fixture(scope="session")
def equilibrium(ms):
    return solve_equilibrium(ms)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
