import numpy as np
import pytest

from waplab.averaging import VanHoveFamily
from waplab.measures import Box
from waplab.models import fibonacci_scheme, gen_cut_project, gen_lattice, gen_perturbed_integer

BIG = Box.interval(-2e4, 2e4)


@pytest.fixture(scope="session")
def family():
    return VanHoveFamily()


@pytest.fixture(scope="session")
def lattice_big():
    return gen_lattice(1.0, 0.0, BIG)


@pytest.fixture(scope="session")
def perturbed_big():
    return gen_perturbed_integer(BIG)


@pytest.fixture(scope="session")
def fibonacci_big():
    return gen_cut_project(fibonacci_scheme(), BIG)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
