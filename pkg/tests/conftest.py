import numpy as np
import pytest

from fastising import graph


@pytest.fixture(scope="session")
def torus44():
    return graph.build(graph.GraphSpec("lattice2d-torus", 4, 4, 1))


@pytest.fixture(scope="session")
def torus45():
    return graph.build(graph.GraphSpec("lattice2d-torus", 4, 5, 1))


@pytest.fixture(scope="session")
def free64_k8():
    return graph.build(graph.GraphSpec("lattice2d-free", 64, 64, 2))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
