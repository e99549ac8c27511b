import numpy as np
import pytest

from phongfit.mesh import ControlMesh


def central_diff(f, x, h=1e-6):
    """Central finite-difference Jacobian of a vector function, (m, n)."""
    x = np.asarray(x, dtype=np.float64)
    cols = []
    for j in range(len(x)):
        hi = x.copy()
        lo = x.copy()
        hi[j] += h
        lo[j] -= h
        cols.append((np.asarray(f(hi)) - np.asarray(f(lo))) / (2.0 * h))
    return np.stack(cols, axis=-1)


def rel_err(analytic, numeric):
    analytic = np.asarray(analytic)
    numeric = np.asarray(numeric)
    denom = max(float(np.abs(numeric).max()), 1.0)
    return float(np.abs(analytic - numeric).max()) / denom


def unit_rows(a):
    return a / np.linalg.norm(a, axis=-1, keepdims=True)


OCTA_VERTS = np.array([
    [1.0, 0, 0], [-1.0, 0, 0], [0, 1.0, 0], [0, -1.0, 0], [0, 0, 1.0], [0, 0, -1.0],
])
OCTA_FACES = np.array([
    [0, 2, 4], [2, 1, 4], [1, 3, 4], [3, 0, 4],
    [2, 0, 5], [1, 2, 5], [3, 1, 5], [0, 3, 5],
])


@pytest.fixture
def octahedron():
    return ControlMesh(OCTA_VERTS, OCTA_VERTS.copy(), OCTA_FACES)


@pytest.fixture
def two_triangles():
    # shared edge (0, 1); second triangle folded slightly out of plane
    verts = np.array([
        [0.0, 0.0, 0.0],
        [1.0, 0.0, 0.0],
        [0.4, 1.0, 0.0],
        [0.6, -1.0, 0.3],
    ])
    normals = unit_rows(np.array([
        [0.0, 0.1, 1.0],
        [0.1, 0.0, 1.0],
        [0.0, 0.0, 1.0],
        [-0.1, -0.1, 1.0],
    ]))
    faces = np.array([[0, 1, 2], [1, 0, 3]])
    return ControlMesh(verts, normals, faces)


@pytest.fixture
def single_triangle():
    verts = np.array([[0.0, 0.0, 0.0], [2.0, 0.0, 0.0], [0.0, 2.0, 0.0]])
    normals = unit_rows(np.array([[0.1, 0.0, 1.0], [0.0, 0.1, 1.0], [0.0, 0.0, 1.0]]))
    return ControlMesh(verts, normals, np.array([[0, 1, 2]]))


def random_mesh_patch(rng, jitter=0.3):
    """A small random two-triangle mesh with random unit normals."""
    verts = np.array([
        [0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.3, 0.9, 0.0], [0.7, -0.8, 0.0],
    ]) + jitter * rng.standard_normal((4, 3))
    normals = unit_rows(rng.standard_normal((4, 3)) + np.array([0, 0, 2.5]))
    return ControlMesh(verts, normals, np.array([[0, 1, 2], [1, 0, 3]]))


def interior_vw(rng, margin=0.08):
    v = rng.uniform(margin, 1.0 - 2 * margin)
    w = rng.uniform(margin, 1.0 - v - margin)
    return v, w
