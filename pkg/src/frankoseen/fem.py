"""Continuous piecewise-linear (P1) finite elements on tetrahedra.

Director fields are plain ``(N, 3)`` arrays of nodal values and scalar
fields ``(N,)`` arrays, both tied to a :class:`~frankoseen.mesh.TetMesh`.
Vector unknowns restricted to the free (non-Dirichlet) vertices use a
component-blocked layout: ``[u_x(free), u_y(free), u_z(free)]``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.special import roots_jacobi

from .mesh import TetMesh


@dataclass(frozen=True)
class ElementGeometry:
    volumes: np.ndarray   # (M,)
    grads: np.ndarray     # (M, 4, 3): gradient of barycentric coordinate a on tet m


def element_geometry(mesh: TetMesh) -> ElementGeometry:
    p = mesh.vertices[mesh.tets]
    J = np.transpose(p[:, 1:] - p[:, :1], (0, 2, 1))  # columns are edge vectors
    Jinv = np.linalg.inv(J)
    grads = np.empty((mesh.n_tets, 4, 3))
    grads[:, 1:] = Jinv
    grads[:, 0] = -Jinv.sum(axis=1)
    vol = np.linalg.det(J) / 6.0
    return ElementGeometry(vol, grads)


@dataclass(frozen=True)
class DofMap:
    """Free vertices of a mesh once the Dirichlet nodes are removed."""

    n_vertices: int
    free: np.ndarray

    @classmethod
    def from_dirichlet(cls, n_vertices: int, dirichlet_nodes) -> "DofMap":
        mask = np.ones(n_vertices, dtype=bool)
        mask[np.asarray(dirichlet_nodes, dtype=np.int64)] = False
        return cls(n_vertices, np.flatnonzero(mask))

    @property
    def n_free(self) -> int:
        return len(self.free)

    def restrict(self, field: np.ndarray) -> np.ndarray:
        """(N, 3) nodal field -> component-blocked free vector."""
        return np.asarray(field)[self.free].T.ravel()

    def extend(self, vec: np.ndarray) -> np.ndarray:
        """Component-blocked free vector -> (N, 3) field, zero on Dirichlet nodes."""
        out = np.zeros((self.n_vertices, 3))
        out[self.free] = np.asarray(vec).reshape(3, -1).T
        return out

    def vector_indices(self) -> np.ndarray:
        """Rows of the full component-blocked space kept by the restriction."""
        return np.concatenate([self.free + c * self.n_vertices for c in range(3)])


# -------------------------------------------------------------- quadrature

_TET_DEG2 = (np.array([[0.5854101966249685, 0.1381966011250105, 0.1381966011250105, 0.1381966011250105],
                       [0.1381966011250105, 0.5854101966249685, 0.1381966011250105, 0.1381966011250105],
                       [0.1381966011250105, 0.1381966011250105, 0.5854101966249685, 0.1381966011250105],
                       [0.1381966011250105, 0.1381966011250105, 0.1381966011250105, 0.5854101966249685]]),
             np.full(4, 0.25))


@lru_cache(maxsize=None)
def _conical_rule(dim: int, npts: int):
    """Collapsed Gauss-Jacobi product rule on the unit simplex, exact for
    polynomials of degree 2*npts - 1.  Returns barycentric points and
    weights summing to one."""
    factors = []
    for k in range(dim):
        alpha = dim - 1 - k
        t, w = roots_jacobi(npts, alpha, 0.0)
        factors.append(((1 + t) / 2, w / w.sum()))
    pts, wts = [], []
    for idx in np.ndindex(*(npts,) * dim):
        xi = [factors[k][0][i] for k, i in enumerate(idx)]
        w = np.prod([factors[k][1][i] for k, i in enumerate(idx)])
        coords, rest = [], 1.0
        for x in xi:
            coords.append(rest * x)
            rest *= 1 - x
        bary = [1.0 - sum(coords)] + coords
        pts.append(bary)
        wts.append(w)
    return np.array(pts), np.array(wts)


def quadrature_rule(degree: int, dim: int = 3):
    """Barycentric points and weights (summing to 1) on a simplex, exact up to
    the requested polynomial degree.  Supported degrees: 2 and 4."""
    if degree not in (2, 4):
        raise ValueError(f"unsupported quadrature degree {degree}; use 2 or 4")
    if dim == 3 and degree == 2:
        return _TET_DEG2[0].copy(), _TET_DEG2[1].copy()
    pts, wts = _conical_rule(dim, (degree + 2) // 2)
    return pts.copy(), wts.copy()


# ------------------------------------------------------------ fields

def interpolate(f, mesh: TetMesh) -> np.ndarray:
    """Nodal (Lagrange) interpolant of a vectorised function ``f(X) -> (N, 3)``."""
    values = np.asarray(f(mesh.vertices), dtype=float)
    if values.shape != (mesh.n_vertices, 3):
        values = np.broadcast_to(values, (mesh.n_vertices, 3)).copy()
    bad = np.flatnonzero(~np.isfinite(values).all(axis=1))
    if len(bad):
        z = int(bad[0])
        raise ValueError(f"non-finite value at vertex {z} ({mesh.vertices[z].tolist()})")
    return values


def evaluate(mesh: TetMesh, field: np.ndarray, tet: int, bary) -> np.ndarray:
    """Value of a P1 field inside ``tet`` at barycentric coordinates ``bary``."""
    return np.asarray(bary) @ np.asarray(field)[mesh.tets[tet]]


def locate(mesh: TetMesh, x, tol: float = 1e-12):
    """Return (tet index, barycentric coordinates) of a point, or raise."""
    x = np.asarray(x, dtype=float)
    g = mesh.geometry
    p0 = mesh.vertices[mesh.tets[:, 0]]
    lam = np.einsum("mij,mj->mi", g.grads[:, 1:], x - p0)
    bary = np.column_stack([1 - lam.sum(axis=1), lam])
    hit = np.flatnonzero((bary >= -tol).all(axis=1))
    if not len(hit):
        raise ValueError(f"point {x.tolist()} is outside the mesh")
    return int(hit[0]), bary[hit[0]]


def field_gradients(mesh: TetMesh, field: np.ndarray) -> np.ndarray:
    """Per-tet gradient G[m, i, j] = d n_i / d x_j of a P1 vector field."""
    g = mesh.geometry
    return np.matmul(np.asarray(field)[mesh.tets].transpose(0, 2, 1), g.grads)


def curl_from_gradient(G: np.ndarray) -> np.ndarray:
    return np.stack([G[..., 2, 1] - G[..., 1, 2],
                     G[..., 0, 2] - G[..., 2, 0],
                     G[..., 1, 0] - G[..., 0, 1]], axis=-1)


def element_curl_div_grad(mesh: TetMesh, field: np.ndarray, tet: int):
    """Constant gradient (3x3), divergence and curl of a P1 field on one tet."""
    G = np.einsum("ai,aj->ij", np.asarray(field)[mesh.tets[tet]], mesh.geometry.grads[tet])
    return G, float(np.trace(G)), curl_from_gradient(G)


def values_at_points(mesh: TetMesh, field: np.ndarray, bary: np.ndarray) -> np.ndarray:
    """Field values at barycentric points of every tet: shape (M, Q, ...)."""
    return combine_at_points(np.asarray(bary), np.asarray(field)[mesh.tets])


def combine_at_points(bary: np.ndarray, local: np.ndarray) -> np.ndarray:
    """out[m, q, ...] = sum_a bary[q, a] local[m, a, ...], as one BLAS product."""
    M = local.shape[0]
    rest = local.shape[2:]
    flat = np.moveaxis(local, 1, -1).reshape(-1, local.shape[1]) @ bary.T
    return np.moveaxis(flat.reshape(M, *rest, len(bary)), -1, 1)


def spread_from_points(bary: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Transpose of :func:`combine_at_points`: out[m, a, ...] = sum_q bary[q, a] values[m, q, ...]."""
    M = values.shape[0]
    rest = values.shape[2:]
    flat = np.moveaxis(values, 1, -1).reshape(-1, values.shape[1]) @ bary
    return np.moveaxis(flat.reshape(M, *rest, bary.shape[1]), -1, 1)


# ------------------------------------------------------------ assembly

def _coo(rows, cols, vals, shape):
    return sp.coo_matrix((vals.ravel(), (rows.ravel(), cols.ravel())), shape=shape).tocsr()


def scalar_stiffness(mesh: TetMesh) -> sp.csr_matrix:
    """Unrestricted scalar Laplacian matrix (grad phi_a, grad phi_b)."""
    g = mesh.geometry
    local = g.volumes[:, None, None] * np.einsum("mai,mbi->mab", g.grads, g.grads)
    t = mesh.tets
    rows = np.broadcast_to(t[:, :, None], local.shape)
    cols = np.broadcast_to(t[:, None, :], local.shape)
    return _coo(rows, cols, local, (mesh.n_vertices,) * 2)


def vector_stiffness(mesh: TetMesh) -> sp.csr_matrix:
    """Unrestricted (grad u, grad v) on the component-blocked vector space."""
    return sp.block_diag([scalar_stiffness(mesh)] * 3, format="csr")


def divdiv_matrix(mesh: TetMesh) -> sp.csr_matrix:
    """Unrestricted (div u, div v) on the component-blocked vector space."""
    g = mesh.geometry
    N = mesh.n_vertices
    # local index (a, i) -> dof i*N + tet[a]
    dofs = (mesh.tets[:, None, :] + N * np.arange(3)[None, :, None]).reshape(mesh.n_tets, 12)
    gflat = np.transpose(g.grads, (0, 2, 1)).reshape(mesh.n_tets, 12)  # entry (i, a) = g_a[i]
    local = g.volumes[:, None, None] * gflat[:, :, None] * gflat[:, None, :]
    rows = np.broadcast_to(dofs[:, :, None], local.shape)
    cols = np.broadcast_to(dofs[:, None, :], local.shape)
    return _coo(rows, cols, local, (3 * N, 3 * N))


def restrict_matrix(M: sp.spmatrix, dofmap: DofMap) -> sp.csr_matrix:
    idx = dofmap.vector_indices()
    return M.tocsr()[idx][:, idx].tocsr()


def assemble_stiffness(mesh: TetMesh, dofmap: DofMap) -> sp.csr_matrix:
    return restrict_matrix(vector_stiffness(mesh), dofmap)


def assemble_divdiv(mesh: TetMesh, dofmap: DofMap) -> sp.csr_matrix:
    return restrict_matrix(divdiv_matrix(mesh), dofmap)


def lumped_mass_weights(mesh: TetMesh) -> np.ndarray:
    """Nodal weights w(z) = |star(z)| / 4, so that sum_z v(z) w(z) = int v for P1 v."""
    vol = mesh.geometry.volumes
    return np.bincount(mesh.tets.ravel(), weights=np.repeat(vol / 4.0, 4),
                       minlength=mesh.n_vertices)
