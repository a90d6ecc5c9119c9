import math

import numpy as np
import pytest

from config import default_numerics
from graph_model import free_n_graph, free_star_graph, free_z_graph, triangle_graph
from measure_tools import build_example_5_2

STAR_EIGENVALUE = 3 / math.sqrt(2)
GOLDEN_LEAF = (3 + math.sqrt(5)) / 2


def free_m(z: complex) -> complex:
    """Closed-form m-function of the free half-line"""
    z = complex(z)
    return (-z + np.sqrt(z - 2) * np.sqrt(z + 2)) / 2


@pytest.fixture
def numerics():
    return default_numerics()


@pytest.fixture
def rng():
    return np.random.default_rng(20240)


@pytest.fixture
def free_n():
    return free_n_graph()


@pytest.fixture
def free_z():
    return free_z_graph()


@pytest.fixture
def free_star():
    return free_star_graph(3)


@pytest.fixture
def dirichlet_star():
    return free_star_graph(3, leaf_b=GOLDEN_LEAF)


@pytest.fixture
def triangle():
    return triangle_graph()


@pytest.fixture(scope="session")
def triangle_example():
    return build_example_5_2()
