import numpy as np
import pytest

from beamwave.lattice import Grid
from beamwave.regions import decompose
from beamwave.resonance import BroadeningKernel, enumerate_triples


@pytest.fixture(scope="session")
def ref_grid():
    return Grid(6, 2.5)


@pytest.fixture(scope="session")
def ref_kernel():
    return BroadeningKernel(0.1)


@pytest.fixture(scope="session")
def ref_table(ref_grid, ref_kernel):
    return enumerate_triples(ref_grid, ref_kernel)


@pytest.fixture(scope="session")
def ref_decomp(ref_grid, ref_table):
    return decompose(ref_grid, ref_table)


@pytest.fixture(scope="session")
def small_setup():
    """D=4 grid with a box kernel: small but with several regions."""
    g = Grid(4, 2.5)
    t = enumerate_triples(g, BroadeningKernel(0.1, "box"))
    return g, t, decompose(g, t)


@pytest.fixture
def rng():
    return np.random.default_rng(20261019)


ACCEPTANCE_LINES = {}


def record_criterion(number: int, title: str, passed: bool, detail: str) -> None:
    line = f"criterion {number:2d} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
