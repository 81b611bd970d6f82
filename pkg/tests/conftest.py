import numpy as np
import pytest

from strayfield import mesh as meshmod


@pytest.fixture(scope="session")
def sphere1():
    return meshmod.generate_sphere_mesh(1.0, 1)


@pytest.fixture(scope="session")
def sphere2():
    return meshmod.generate_sphere_mesh(1.0, 2)


@pytest.fixture(scope="session")
def sphere3():
    return meshmod.generate_sphere_mesh(1.0, 3)


@pytest.fixture(scope="session")
def cube_mesh():
    return meshmod.generate_prism_mesh(1.0, 1.0, 1.0, 3, 3, 3)


@pytest.fixture(scope="session")
def torus_small():
    return meshmod.generate_torus_mesh(2.0, 1.0, 12, 6, 2)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
