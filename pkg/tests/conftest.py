import numpy as np
import pytest

from flipit_timing import LossSpec, Weibull

GRID19 = np.arange(1.0, 10.01, 0.5)


@pytest.fixture
def grid19():
    return GRID19.copy()


@pytest.fixture
def binary():
    return LossSpec("binary", 0.1)


@pytest.fixture
def linear10():
    return LossSpec("linear", 0.1, 10.0)


@pytest.fixture
def weibull52():
    return Weibull(5.0, 2.0)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
