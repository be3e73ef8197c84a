import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def interior_simplex(rng, d, n, conc=2.0):
    return rng.dirichlet(np.full(d + 1, conc), size=n)[:, :d]


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
