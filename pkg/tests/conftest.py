"""Shared fixtures."""

import pytest

from fracthj.torus import TorusGrid


@pytest.fixture
def grid1():
    return TorusGrid(1, 32)


@pytest.fixture
def grid2():
    return TorusGrid(2, 16)


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE

    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
