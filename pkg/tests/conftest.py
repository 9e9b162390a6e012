"""Shared small fixtures; meshes are immutable so session scope is safe."""

import numpy as np
import pytest

from artifact.mesh import (TriangleMesh, clifford_torus, flat_rectangle,
                           geodesic_cap, icosphere)


def tetrahedron():
    verts = np.array([
        [1.0, 1.0, 1.0],
        [1.0, -1.0, -1.0],
        [-1.0, 1.0, -1.0],
        [-1.0, -1.0, 1.0],
    ])
    faces = np.array([
        [0, 2, 1],
        [0, 1, 3],
        [0, 3, 2],
        [1, 2, 3],
    ])
    return TriangleMesh(verts, faces)


@pytest.fixture(scope="session")
def tetra():
    return tetrahedron()


@pytest.fixture(scope="session")
def sphere2():
    return icosphere(1.0, 2)


@pytest.fixture(scope="session")
def sphere3():
    return icosphere(1.0, 3)


@pytest.fixture(scope="session")
def torus16():
    return clifford_torus(16, 16)


@pytest.fixture(scope="session")
def torus32():
    return clifford_torus(32, 32)


@pytest.fixture(scope="session")
def square16():
    return flat_rectangle(1.0, 1.0, 16, 16)


@pytest.fixture(scope="session")
def cap3():
    return geodesic_cap(np.pi / 3.0, 3)
