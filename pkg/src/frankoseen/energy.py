"""Frank-Oseen elastic energy in its min-constant form, magnetic coupling,
first variation and unit-length / boundary diagnostics."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from . import fem
from .fem import DofMap
from .mesh import TetMesh


@dataclass(frozen=True)
class FrankConstants:
    """Frank elastic constants and magnetic parameters.

    ``H`` is either a constant 3-vector or a vectorised function mapping
    points ``(..., 3)`` to field values ``(..., 3)``.  ``k4`` is kept for
    bookkeeping only: under Dirichlet conditions the saddle-splay term is a
    constant and never enters the computed energy.
    """

    k1: float
    k2: float
    k3: float
    k4: float = 0.0
    chi_A: float = 0.0
    H: object = (0.0, 0.0, 0.0)

    def __post_init__(self):
        for name in ("k1", "k2", "k3"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.chi_A < 0:
            raise ValueError("chi_A must be nonnegative")

    @property
    def H_is_constant(self) -> bool:
        return not callable(self.H)

    def H_at(self, x: np.ndarray) -> np.ndarray:
        if callable(self.H):
            return np.asarray(self.H(x), dtype=float)
        return np.broadcast_to(np.asarray(self.H, dtype=float), np.shape(x))

    @property
    def magnetic(self) -> bool:
        if self.chi_A == 0:
            return False
        return callable(self.H) or bool(np.any(np.asarray(self.H) != 0))


@dataclass(frozen=True)
class ModifiedConstants:
    c0: float
    c1: float
    c2: float
    c3: float


def modified_constants(fc: FrankConstants) -> ModifiedConstants:
    """c0 = min(k1, k2, k3) and ci = ki - c0."""
    k = (fc.k1, fc.k2, fc.k3)
    if min(k) <= 0:
        raise ValueError(f"Frank constants must be positive, got {k}")
    c0 = min(k)
    return ModifiedConstants(c0, k[0] - c0, k[1] - c0, k[2] - c0)


@dataclass(frozen=True)
class EnergyBreakdown:
    one_constant: float
    splay_w: float
    twist_w: float
    bend_w: float
    magnetic: float
    splay: float
    twist: float
    bend: float
    dirichlet: float = field(default=0.0)   # ||grad n||^2

    @property
    def elastic(self) -> float:
        return self.one_constant + self.splay_w + self.twist_w + self.bend_w

    @property
    def total(self) -> float:
        return self.elastic + self.magnetic

    def as_dict(self) -> dict:
        return {"total": self.total, "elastic": self.elastic,
                "one_constant": self.one_constant, "splay_w": self.splay_w,
                "twist_w": self.twist_w, "bend_w": self.bend_w,
                "magnetic": self.magnetic, "splay": self.splay,
                "twist": self.twist, "bend": self.bend}


def _quad_degree(fc: FrankConstants) -> int:
    return 2 if fc.H_is_constant else 4


def _H_at_points(mesh, fc, bary):
    if fc.H_is_constant:
        return np.broadcast_to(np.asarray(fc.H, dtype=float), (mesh.n_tets, len(bary), 3))
    X = fem.values_at_points(mesh, mesh.vertices, bary)
    return fc.H_at(X)


def _nodal_accumulate(mesh, local):
    """Sum element contributions (M, 4, 3) into nodal values (N, 3)."""
    N = mesh.n_vertices
    idx = mesh.tets.ravel()
    flat = local.reshape(-1, 3)
    return np.stack([np.bincount(idx, weights=flat[:, c], minlength=N) for c in range(3)], axis=1)


def _pointwise(mesh, n, fc, bary):
    G = fem.field_gradients(mesh, n)
    curl = fem.curl_from_gradient(G)
    nq = fem.values_at_points(mesh, n, bary)                 # (M, Q, 3)
    return G, curl, nq


def energy(mesh: TetMesh, n: np.ndarray, fc: FrankConstants) -> EnergyBreakdown:
    """Evaluate all energy contributions with element-wise exact quadrature."""
    return energy_and_gradient(mesh, n, fc, want_gradient=False)[0]


def energy_and_gradient(mesh: TetMesh, n: np.ndarray, fc: FrankConstants, *,
                        want_gradient: bool = True,
                        stiffness: Optional[sp.spmatrix] = None,
                        divdiv: Optional[sp.spmatrix] = None,
                        terms=("one_constant", "splay", "twist", "bend", "magnetic")):
    """Energy breakdown and nodal gradient dE_total/dn(z) as an (N, 3) array.

    The directional derivative of the selected energy terms at ``n`` along
    a P1 field ``v`` is ``sum(grad * v)``.  ``terms`` only filters the
    gradient; the breakdown always reports every contribution.
    """
    mc = modified_constants(fc)
    N = mesh.n_vertices
    geo = mesh.geometry
    vol = geo.volumes
    n = np.asarray(n, dtype=float)
    bary, w = fem.quadrature_rule(_quad_degree(fc))
    G, curl, nq = _pointwise(mesh, n, fc, bary)
    div = np.trace(G, axis1=1, axis2=2)
    grad_sq = float(np.sum(G * G, axis=(1, 2)) @ vol)
    splay = float((div ** 2) @ vol)
    wq = vol[:, None] * w[None, :]                           # (M, Q)
    tw = np.einsum("mqi,mi->mq", nq, curl)
    bd = np.cross(nq, curl[:, None, :])
    twist = float(np.sum(tw ** 2 * wq))
    bend = float(np.sum(np.einsum("mqi,mqi->mq", bd, bd) * wq))
    mag = 0.0
    if fc.magnetic:
        Hq = _H_at_points(mesh, fc, bary)
        nh = np.einsum("mqi,mqi->mq", nq, Hq)
        mag = -0.5 * fc.chi_A * float(np.sum(nh ** 2 * wq))
    breakdown = EnergyBreakdown(
        one_constant=0.5 * mc.c0 * grad_sq,
        splay_w=0.5 * mc.c1 * splay,
        twist_w=0.5 * mc.c2 * twist,
        bend_w=0.5 * mc.c3 * bend,
        magnetic=mag,
        splay=splay, twist=twist, bend=bend,
        dirichlet=grad_sq,
    )
    if not want_gradient:
        return breakdown, None

    out = np.zeros((N, 3))
    flat = n.T.ravel()
    if "one_constant" in terms and mc.c0:
        K = fem.vector_stiffness(mesh) if stiffness is None else stiffness
        out += mc.c0 * (K @ flat).reshape(3, N).T
    if "splay" in terms and mc.c1:
        D = fem.divdiv_matrix(mesh) if divdiv is None else divdiv
        out += mc.c1 * (D @ flat).reshape(3, N).T

    local = np.zeros((mesh.n_tets, 4, 3))
    g = geo.grads                                            # (M, 4, 3)
    if "twist" in terms and mc.c2:
        # (n.c)(v.c + n.curl v) with curl(phi_a e_i) = g_a x e_i
        t = tw * wq
        local += mc.c2 * (t @ bary)[:, :, None] * curl[:, None, :]
        # sum_q t_q (n_q x g_a) = (sum_q t_q n_q) x g_a
        tn = np.einsum("mq,mqi->mi", t, nq)
        local += mc.c2 * np.cross(tn[:, None, :], g)
    if "bend" in terms and mc.c3:
        # m = n x c;  m.(v x c) + m.(n x curl v)
        m = bd * wq[:, :, None]
        cxm = np.cross(curl[:, None, :], m)
        local += mc.c3 * fem.spread_from_points(bary, cxm)
        # sum_q (m.g_a) n - (n.g_a) m = P g_a with P = sum_q n m^T - m n^T
        P = np.matmul(nq.transpose(0, 2, 1), m)
        P = P - np.transpose(P, (0, 2, 1))
        local += mc.c3 * np.matmul(g, P.transpose(0, 2, 1))
    if "magnetic" in terms and fc.magnetic:
        Hq = _H_at_points(mesh, fc, bary)
        nh = np.einsum("mqi,mqi->mq", nq, Hq) * wq
        local -= fc.chi_A * fem.spread_from_points(bary, nh[:, :, None] * Hq)
    return breakdown, out + _nodal_accumulate(mesh, local)


def energy_gradient(mesh: TetMesh, n: np.ndarray, fc: FrankConstants, **kwargs) -> np.ndarray:
    """Nodal gradient of the total energy, see :func:`energy_and_gradient`."""
    return energy_and_gradient(mesh, n, fc, **kwargs)[1]


def first_variation(mesh: TetMesh, n: np.ndarray, fc: FrankConstants, dofmap: DofMap,
                    **kwargs) -> np.ndarray:
    """Right-hand side f = -dE_total[n; .] on the free unknowns
    (component-blocked)."""
    return -dofmap.restrict(energy_gradient(mesh, n, fc, **kwargs))


# ---------------------------------------------------------- diagnostics

def _positive_part_integral(v: np.ndarray) -> np.ndarray:
    """Exact mean of max(u, 0) over a tet for linear u with vertex values
    v (T, 4), split by the number of positive vertices."""
    v = np.sort(v, axis=1)[:, ::-1]            # descending
    npos = (v > 0).sum(axis=1)
    out = np.zeros(len(v))
    all_pos = npos == 4
    out[all_pos] = v[all_pos].mean(axis=1)

    def one_positive(a, rest):
        return a ** 4 / (4 * np.prod(a[:, None] - rest, axis=1))

    sel = npos == 1
    out[sel] = one_positive(v[sel, 0], v[sel, 1:])
    sel = npos == 3
    # u_+ = u + (-u)_+, and -u has a single positive vertex
    w = -v[sel][:, ::-1]
    out[sel] = v[sel].mean(axis=1) + one_positive(w[:, 0], w[:, 1:])
    sel = npos == 2
    a, b, c, d = (v[sel, i] for i in range(4))
    s, p = c + d, c * d
    num = a * a * b * b * (a + b) - s * a * b * (a * a + a * b + b * b) + p * (a + b) * (a * a + b * b)
    den = (a - c) * (a - d) * (b - c) * (b - d)
    out[sel] = num / (4 * den)
    return out


def constraint_error(mesh: TetMesh, n: np.ndarray, p) -> float:
    """err_p = || I_h[|n|^2 - 1] ||_{L^p} for p in {1, inf}."""
    q = np.einsum("ij,ij->i", n, n) - 1.0
    if p in (np.inf, "inf", float("inf")):
        return float(np.abs(q).max())
    if p != 1:
        raise ValueError(f"unsupported p={p!r}; use 1 or inf")
    v = q[mesh.tets]
    pos = _positive_part_integral(v)
    absmean = 2 * pos - v.mean(axis=1)
    return float(absmean @ mesh.geometry.volumes)


def boundary_error(mesh: TetMesh, n: np.ndarray, g: Callable, faces_mask=None) -> float:
    """L2 norm of n - g over boundary faces (all, or those selected by mask)."""
    faces = mesh.faces if faces_mask is None else mesh.faces[faces_mask]
    if not len(faces):
        return 0.0
    bary, w = fem.quadrature_rule(4, dim=2)
    p = mesh.vertices[faces]
    area = 0.5 * np.linalg.norm(np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), axis=1)
    X = np.einsum("qa,fai->fqi", bary, p)
    nq = np.einsum("qa,fai->fqi", bary, np.asarray(n)[faces])
    gq = np.asarray(g(X.reshape(-1, 3)), dtype=float).reshape(X.shape)
    d = nq - gq
    return float(np.sqrt((np.einsum("fqi,fqi->fq", d, d) @ w) @ area))


def helein_margin(fc: FrankConstants) -> float:
    """8(k2 - k1) + k3; nonnegative iff the radial hedgehog is stable."""
    return 8.0 * (fc.k2 - fc.k1) + fc.k3


def freedericksz_threshold(k1: float, chi_A: float, w: float) -> float:
    """Critical field (1 / 2w) sqrt(k1 / chi_A) for a cell of thickness w."""
    if chi_A <= 0:
        raise ValueError("chi_A must be positive")
    if w <= 0:
        raise ValueError("w must be positive")
    return np.sqrt(k1 / chi_A) / (2.0 * w)
