import numpy as np
import pytest

from acoustomax import forward
from acoustomax.config import validation_medium, validation_source
from acoustomax.fem import QuadratureCache
from acoustomax.mesh import gen_disk_mesh


@pytest.fixture(scope="session")
def mesh3():
    return gen_disk_mesh(1.0, 3)


@pytest.fixture(scope="session")
def mesh4():
    return gen_disk_mesh(1.0, 4)


@pytest.fixture(scope="session")
def cache3(mesh3):
    return QuadratureCache(mesh3)


@pytest.fixture(scope="session")
def cache4(mesh4):
    return QuadratureCache(mesh4)


@pytest.fixture(scope="session")
def mild_medium():
    return validation_medium()


@pytest.fixture(scope="session")
def two_bump_source():
    return validation_source()


@pytest.fixture(scope="session")
def mild_solution(cache4, mild_medium, two_bump_source):
    """Forward solve of the mild validation scenario at refinement 4."""
    return forward.solve_impedance(cache4, mild_medium, source=two_bump_source)
