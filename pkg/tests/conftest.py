import numpy as np
import pytest

from symbreak.fields import Grid, ScalarField


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def smooth(grid: Grid, rng: np.random.Generator, kmax: int = 3) -> ScalarField:
    """Random low-mode trigonometric field."""
    x, y = grid.coords()
    out = np.zeros(grid.shape)
    for kx in range(-kmax, kmax + 1):
        for ky in range(0, kmax + 1):
            a, b = rng.standard_normal(2)
            ph = 2 * np.pi * (kx * x + ky * y)
            out += a * np.cos(ph) + b * np.sin(ph)
    return ScalarField(grid, out)


ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
