import numpy as np
import pytest

from frankoseen.mesh import TetMesh, _finalize, build_box_mesh


def random_unit_field(n_vertices, seed=0):
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((n_vertices, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def single_tet_mesh(points=None) -> TetMesh:
    if points is None:
        points = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=float)
    return _finalize(np.asarray(points, dtype=float), np.array([[0, 1, 2, 3]]),
                     lambda c: np.full(len(c), "boundary", dtype=object))


def two_tet_mesh() -> TetMesh:
    pts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1], [1, 1, 1]], dtype=float)
    return _finalize(pts, np.array([[0, 1, 2, 3], [1, 2, 3, 4]]),
                     lambda c: np.full(len(c), "boundary", dtype=object))


@pytest.fixture
def unit_cube():
    return build_box_mesh((0, 0, 0), (1, 1, 1), 2, 2, 2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
