import numpy as np
import pytest
from hypothesis import settings

from pxbiharmonic import ExponentTriple, Grid, PhiModel, ProblemSpec

settings.register_profile("ci", deadline=None, max_examples=60, derandomize=True)
settings.load_profile("ci")

# filled by tests/test_acceptance.py, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def grid101():
    return Grid.uniform(101)


@pytest.fixture(scope="session")
def grid201():
    return Grid.uniform(201)


def make_spec(grid, p=2.5, q=0.5, r=1.5, lam=1.0, tag="power", **kw):
    e = ExponentTriple.constant(grid, p, q, r)
    return ProblemSpec(e, PhiModel(tag, e.p), lam=lam, **kw)


@pytest.fixture(scope="session")
def power_spec(grid201):
    return make_spec(grid201)
