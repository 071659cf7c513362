import numpy as np
import pytest

from displat.potentials import random_regular, v1, v3

#: PASS/FAIL lines recorded by the acceptance suite, printed in the summary.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def V1():
    return v1()


@pytest.fixture(scope="session")
def V3():
    return v3()


@pytest.fixture(scope="session")
def V_regular():
    return random_regular(0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
