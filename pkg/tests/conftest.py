import numpy as np
import pytest

from chetaev_lab.grid import Grid, Metric

_ACCEPTANCE = []


@pytest.fixture
def criterion():
    """Record one acceptance line, then assert it."""

    def record(number: int, title: str, passed: bool, detail: str):
        line = f"criterion {number:2d} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
        _ACCEPTANCE.append((number, line))
        print(line)
        assert passed, line

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_ACCEPTANCE):
        terminalreporter.write_line(line)


@pytest.fixture
def line_grid():
    return Grid.line(-10.0, 10.0, 256)


@pytest.fixture
def unit_metric():
    return Metric((1.0,))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
