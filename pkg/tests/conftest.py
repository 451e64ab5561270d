from __future__ import annotations

import pytest

from bermudan_dual.market import ModelParams, TimeGrid


@pytest.fixture
def put_params():
    return ModelParams(100.0, 0.4, 0.0, 0.06, 0.0, 0.5)


@pytest.fixture
def put_grid():
    return TimeGrid(10, 1, 0.5)


@pytest.fixture
def basket_params():
    return ModelParams((100.0, 100.0, 100.0), 0.2, 0.0, 0.05, 0.3, 1.0)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
