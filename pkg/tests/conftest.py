import hypothesis
import numpy as np
import pytest

from parsearch.analytic import Cost
from parsearch.boundary import contact_set
from parsearch.grid import GridSpec, default_eps_contact, default_grid
from parsearch.solver import solve

hypothesis.settings.register_profile("default", max_examples=50, deadline=None)
hypothesis.settings.load_profile("default")

# criterion number -> (passed, message); filled by tests/test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, msg = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {msg}")


def masked(sol):
    eps = default_eps_contact(sol.cost, sol.mode, sol.grid.h)
    return contact_set(sol.u, sol.g, eps)


@pytest.fixture(scope="session")
def grid2():
    """Coarse copy of the default box, [-4, 8]^2 with h = 1/40."""
    return default_grid(2, 1.0, h=1 / 40)


@pytest.fixture(scope="session")
def par2(grid2):
    return solve(grid2, Cost(1.0), "parallel")


@pytest.fixture(scope="session")
def seq2(grid2):
    return solve(grid2, Cost(0.5, 0.5), "sequential")


@pytest.fixture(scope="session")
def hyb2(grid2):
    return solve(grid2, Cost(1.0, 2.0 / 3.0), "hybrid")


@pytest.fixture(scope="session")
def par1():
    return solve(GridSpec.cube(1, -2.0, 2.0, 1 / 200), Cost(1.0), "parallel")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
