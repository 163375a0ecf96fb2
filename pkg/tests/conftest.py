import numpy as np
import pytest

from surfmorph.mesh import TriMesh


@pytest.fixture
def triangle_mesh():
    """A single right triangle in the z=0 plane."""
    return TriMesh([[0.0, 0.0, 0.0], [3.0, 0.0, 0.0], [0.0, 3.0, 0.0]], [[0, 1, 2]])


@pytest.fixture
def tetrahedron():
    v = np.array(
        [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
    )
    f = np.array([[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]])
    return TriMesh(v, f)


@pytest.fixture
def two_face_mesh():
    """Two coplanar triangles with areas 1 and 3."""
    v = [
        [0.0, 0.0, 0.0],
        [2.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, -3.0, 0.0],
    ]
    # face 0: verts 0,1,2 -> area = 0.5*2*1 = 1; face 1: verts 0,3,1 -> 0.5*2*3 = 3
    return TriMesh(v, [[0, 1, 2], [0, 3, 1]])
