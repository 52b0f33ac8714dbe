import numpy as np
import pytest

from inflap import Ball, Interval, Polygon, SchemeParams, solve

UNIT_SQUARE = Polygon([[0, 0], [1, 0], [1, 1], [0, 1]])
CENTERED_SQUARE = Polygon([[-0.5, -0.5], [0.5, -0.5], [0.5, 0.5], [-0.5, 0.5]])
PENTAGON = Polygon([[0, 0], [1, 0], [1.3, 0.6], [0.5, 1.1], [-0.2, 0.5]])
UNIT_BALL = Ball([0, 0], 1.0)
UNIT_INTERVAL = Interval(-1, 1)


def newton(eps, h=None):
    return SchemeParams(eps=eps, h=h, sweep="newton")


@pytest.fixture(scope="session")
def u_ball():
    return solve(UNIT_BALL, 1.0, newton(0.05))


@pytest.fixture(scope="session")
def u_square():
    return solve(CENTERED_SQUARE, 1.0, newton(3 / 64, 1 / 64))


@pytest.fixture(scope="session")
def u_interval():
    return solve(UNIT_INTERVAL, 1.0, newton(1 / 32))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
