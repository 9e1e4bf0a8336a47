"""Projection-free tangent-space gradient flow for the Frank-Oseen energy.

Each step solves the saddle system

    [A  B^T] [d  ]   [f]
    [B   0 ] [lam] = [0]

with ``A = (1 + c0 tau) K + c1 tau D`` (vector Laplacian and div-div
matrices on the free unknowns), ``B`` the lumped linearised constraint
``w(z) n(z) . d(z) = 0`` and ``f = -dE_total[n]``.  The director is then
updated without normalisation, ``n <- n + tau d``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import pyamg
import scipy.sparse as sp
import scipy.linalg as sla

from . import fem
from .energy import EnergyBreakdown, FrankConstants, constraint_error, energy_and_gradient, modified_constants
from .fem import DofMap
from .linalg import SaddleOperator, block_diagonal_preconditioner, minres
from .mesh import TetMesh

log = logging.getLogger(__name__)

PRECONDITIONERS = ("amg", "jacobi", "none")


class EnergyIncrease(RuntimeError):
    """Raised when a step increases the energy; ``state`` holds the run so far."""

    def __init__(self, message: str, state: "FlowState"):
        super().__init__(message)
        self.state = state


@dataclass(frozen=True)
class FlowConfig:
    """Parameters of a gradient-flow run.

    ``preconditioner`` selects the SPD block-diagonal MINRES preconditioner:

    ``"amg"``
        one algebraic-multigrid V-cycle of ``(1 + c0 tau) K`` per component
        for the primal block and ``(1 + c0 tau) W^-1 K W^-1`` for the
        multipliers (W the lumped weights).  Iteration counts stay nearly
        flat under refinement.
    ``"jacobi"``
        diag(A) and the matching diagonal Schur complement; cheap per
        iteration but the count grows like 1/h.
    ``"none"``
        plain MINRES.
    """

    tau: float
    eps: float
    max_steps: int = 100_000
    rel_tol: float = 1e-10
    max_minres_iter: Optional[int] = None
    preconditioner: str = "amg"
    energy_slack: float = 1e-8
    raise_on_solver_failure: bool = False
    record_history: bool = True

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if self.max_steps < 0:
            raise ValueError("max_steps must be nonnegative")
        if self.preconditioner not in PRECONDITIONERS:
            raise ValueError(f"unknown preconditioner {self.preconditioner!r}; use one of {PRECONDITIONERS}")


@dataclass
class StepResult:
    d: np.ndarray              # (N, 3), zero on Dirichlet nodes
    lam: np.ndarray            # (n_free,)
    iterations: int
    residual: float
    converged: bool
    orthogonality: float       # max_z |n(z) . d(z)| over free nodes


@dataclass
class FlowState:
    """Current iterate plus per-step histories.

    ``energies[k]`` is the breakdown of the k-th iterate (index 0 is the
    initial field); the per-step lists have one entry per completed step.
    Without history recording only the initial and latest entries are kept.
    """

    n: np.ndarray
    k: int = 0
    energies: list = field(default_factory=list)
    err1: list = field(default_factory=list)
    err_inf: list = field(default_factory=list)
    minres_iters: list = field(default_factory=list)
    grad_increment_sq: list = field(default_factory=list)
    orthogonality: list = field(default_factory=list)
    step_law_defect: list = field(default_factory=list)
    min_length_change: list = field(default_factory=list)
    unconverged_steps: list = field(default_factory=list)
    converged: bool = False
    stop_reason: str = ""

    @property
    def steps(self) -> int:
        return self.k

    @property
    def energy(self) -> EnergyBreakdown:
        return self.energies[-1]

    def _trim(self):
        for name in ("energies", "err1", "err_inf"):
            lst = getattr(self, name)
            if len(lst) > 2:
                del lst[1:-1]
        for name in ("minres_iters", "grad_increment_sq", "orthogonality",
                     "step_law_defect", "min_length_change"):
            lst = getattr(self, name)
            if len(lst) > 1:
                del lst[:-1]

    def history_rows(self):
        """One dict per recorded iterate, step 0 being the initial field."""
        if len(self.energies) != self.k + 1:
            raise ValueError("history was not recorded for this run")
        rows = []
        for k, e in enumerate(self.energies):
            rows.append({
                "step": k,
                "E_total": e.total,
                "E_one_const": e.one_constant,
                "splay_w": e.splay_w,
                "twist_w": e.twist_w,
                "bend_w": e.bend_w,
                "E_mag": e.magnetic,
                "err1": self.err1[k] if k < len(self.err1) else np.nan,
                "errInf": self.err_inf[k] if k < len(self.err_inf) else np.nan,
                "minres_iters": self.minres_iters[k - 1] if k else 0,
                "grad_increment_norm_sq": self.grad_increment_sq[k - 1] if k else 0.0,
            })
        return rows


HISTORY_COLUMNS = ("step", "E_total", "E_one_const", "splay_w", "twist_w", "bend_w",
                   "E_mag", "err1", "errInf", "minres_iters", "grad_increment_norm_sq")


class FlowProblem:
    """Matrices that stay fixed during a run: K, D and A on the free unknowns,
    plus the lumped weights."""

    def __init__(self, mesh: TetMesh, fc: FrankConstants, dofmap: DofMap, tau: float):
        self.mesh, self.fc, self.dofmap, self.tau = mesh, fc, dofmap, float(tau)
        self.mc = modified_constants(fc)
        self.K_full = fem.vector_stiffness(mesh)
        self.D_full = fem.divdiv_matrix(mesh)
        self.K = fem.restrict_matrix(self.K_full, dofmap)
        D = fem.restrict_matrix(self.D_full, dofmap)
        self.A = ((1.0 + self.mc.c0 * tau) * self.K + self.mc.c1 * tau * D).tocsr()
        self.A_diag = self.A.diagonal()
        self.weights = fem.lumped_mass_weights(mesh)
        self._vcycle = None

    def evaluate(self, n: np.ndarray):
        """Energy breakdown and nodal gradient at ``n``."""
        return energy_and_gradient(self.mesh, n, self.fc, stiffness=self.K_full, divdiv=self.D_full)

    def constraint_matrix(self, n: np.ndarray) -> sp.csr_matrix:
        """B with rows w(z) n(z)^T over the free nodes, component-blocked columns."""
        free = self.dofmap.free
        nf = len(free)
        wn = self.weights[free, None] * np.asarray(n)[free]
        rows = np.tile(np.arange(nf), 3)
        cols = np.arange(3 * nf)
        return sp.csr_matrix((wn.T.ravel(), (rows, cols)), shape=(nf, 3 * nf))

    def step_system(self, n: np.ndarray, gradient: Optional[np.ndarray] = None):
        """Saddle operator and right-hand side for a step from ``n``."""
        if gradient is None:
            gradient = self.evaluate(n)[1]
        B = self.constraint_matrix(n)
        f = -self.dofmap.restrict(gradient)
        rhs = np.concatenate([f, np.zeros(B.shape[0])])
        return SaddleOperator(self.A, B), rhs

    def _amg(self):
        if self._vcycle is None:
            free = self.dofmap.free
            Ks = fem.scalar_stiffness(self.mesh).tocsr()[free][:, free].tocsr()
            if len(free) == self.mesh.n_vertices:
                # no Dirichlet nodes: K is singular, add a small mass shift
                Ks = Ks + sp.diags(self.weights[free] / np.ptp(self.mesh.vertices, axis=0).max() ** 2)
            # pyamg seeds its spectral radius estimate from the global RNG;
            # pin it so runs are reproducible
            saved = np.random.get_state()
            np.random.seed(0)
            try:
                # forward then backward sweeps keep the V-cycle symmetric
                ml = pyamg.smoothed_aggregation_solver(
                    Ks, max_coarse=500, presmoother=("gauss_seidel", {"sweep": "forward"}),
                    postsmoother=("gauss_seidel", {"sweep": "backward"}))
            finally:
                np.random.set_state(saved)
            self._Ks = Ks
            levels = ml.levels
            # pyamg stores coarse operators as 1x1-block BSR, whose kernels are
            # far slower than CSR
            for L in levels:
                L.A = sp.csr_matrix(L.A)
                if hasattr(L, "P"):
                    L.P, L.R = sp.csr_matrix(L.P), sp.csr_matrix(L.R)

            # hand-rolled V-cycle over pyamg's hierarchy; skips the residual
            # bookkeeping of ml.aspreconditioner
            def vcycle(b, lvl=0):
                L = levels[lvl]
                if lvl == len(levels) - 1:
                    return ml.coarse_solver(L.A, b)
                x = np.zeros_like(b)
                L.presmoother(L.A, x, b)
                x += L.P @ vcycle(L.R @ (b - L.A @ x), lvl + 1)
                L.postsmoother(L.A, x, b)
                return x

            self._vcycle = vcycle
        return self._vcycle

    def preconditioner(self, n: np.ndarray, kind: str = "amg"):
        if kind == "none":
            return None
        free = self.dofmap.free
        nf = len(free)
        if kind == "amg":
            if nf == 0:
                return None
            vcycle = self._amg()
            alpha = 1.0 + self.mc.c0 * self.tau
            Ks, wf = self._Ks, self.weights[free]

            def apply(r):
                out = np.empty_like(r)
                u = r[:3 * nf].reshape(3, nf)
                for c in range(3):
                    out[c * nf:(c + 1) * nf] = vcycle(u[c]) / alpha
                out[3 * nf:] = alpha * (Ks @ (r[3 * nf:] / wf)) / wf
                return out

            return apply
        if kind != "jacobi":
            raise ValueError(f"unknown preconditioner {kind!r}; use one of {PRECONDITIONERS}")
        a = self.A_diag.reshape(3, nf).T
        S = np.sum((self.weights[free, None] * np.asarray(n)[free]) ** 2 / a, axis=1)
        S = np.where(S > 0, S, 1.0)
        inv = 1.0 / self.A_diag
        return block_diagonal_preconditioner(lambda r: inv * r, S, 3 * nf)

    def solve(self, n: np.ndarray, gradient: Optional[np.ndarray] = None, *,
              rel_tol: float = 1e-10, max_iter: Optional[int] = None,
              preconditioner: str = "amg", guess: Optional[StepResult] = None) -> StepResult:
        """MINRES solve of one step; ``guess`` (a previous step) warm-starts it."""
        op, rhs = self.step_system(n, gradient)
        x0 = None if guess is None else np.concatenate([self.dofmap.restrict(guess.d), guess.lam])
        res = minres(op, rhs, rel_tol=rel_tol, max_iter=max_iter,
                     preconditioner=self.preconditioner(n, preconditioner), check_symmetry=False,
                     x0=x0)
        u, lam = op.split(res.x)
        d = self.dofmap.extend(u)
        free = self.dofmap.free
        orth = float(np.abs(np.einsum("ij,ij->i", np.asarray(n)[free], d[free])).max()) if len(free) else 0.0
        return StepResult(d, lam, res.iterations, res.residual, res.converged, orth)


def build_step_system(mesh: TetMesh, n: np.ndarray, fc: FrankConstants, tau: float,
                      dofmap: DofMap):
    """Saddle operator and right-hand side of one flow step from ``n``."""
    return FlowProblem(mesh, fc, dofmap, tau).step_system(n)


def tangent_step(mesh: TetMesh, n: np.ndarray, fc: FrankConstants, dofmap: DofMap,
                 config: FlowConfig) -> StepResult:
    """Solve for the tangent increment ``d`` of a single step."""
    prob = FlowProblem(mesh, fc, dofmap, config.tau)
    return prob.solve(n, rel_tol=config.rel_tol, max_iter=config.max_minres_iter,
                      preconditioner=config.preconditioner)


def tangent_basis(n: np.ndarray) -> np.ndarray:
    """Orthonormal pair (t1, t2) spanning the plane orthogonal to each n(z).

    Returns shape (len(n), 3, 2).
    """
    n = np.asarray(n, dtype=float)
    u = n / np.linalg.norm(n, axis=1, keepdims=True)
    # pick the coordinate axis least aligned with u
    e = np.eye(3)[np.argmin(np.abs(u), axis=1)]
    t1 = e - np.einsum("ij,ij->i", e, u)[:, None] * u
    t1 /= np.linalg.norm(t1, axis=1, keepdims=True)
    t2 = np.cross(u, t1)
    return np.stack([t1, t2], axis=2)


def tangent_elimination_solve(A: sp.spmatrix, n_free: np.ndarray, f: np.ndarray) -> np.ndarray:
    """Reference solve by eliminating the constraint with a nodal tangent basis.

    ``d = T w`` with ``T^T A T w = T^T f``; the reduced matrix is SPD and is
    factorised densely, so this is intended for small problems only.
    Returns the component-blocked free vector ``d``.
    """
    n_free = np.asarray(n_free, dtype=float)
    nf = len(n_free)
    basis = tangent_basis(n_free)                            # (nf, 3, 2)
    rows = (np.arange(3)[:, None, None] * nf + np.arange(nf)[None, :, None])  # (3, nf, 1)
    rows = np.broadcast_to(rows, (3, nf, 2))
    cols = np.broadcast_to(np.arange(nf)[None, :, None] * 2 + np.arange(2)[None, None, :], (3, nf, 2))
    vals = np.transpose(basis, (1, 0, 2))                    # (3, nf, 2)
    T = sp.csr_matrix((vals.ravel(), (rows.ravel(), cols.ravel())), shape=(3 * nf, 2 * nf))
    R = (T.T @ A @ T).toarray()
    w = sla.solve(R, T.T @ f, assume_a="pos")
    return T @ w


def _check_unit(n: np.ndarray, tol: float = 1e-10):
    dev = np.abs(np.einsum("ij,ij->i", n, n) - 1.0)
    if dev.size and dev.max() > tol:
        z = int(np.argmax(dev))
        raise ValueError(f"initial field is not unit length at vertex {z}: |n|^2 - 1 = {dev[z]:.3e}")


def run_gradient_flow(mesh: TetMesh, n0: np.ndarray, fc: FrankConstants, dofmap: DofMap,
                      config: FlowConfig, callback: Optional[Callable] = None) -> FlowState:
    """Run the flow from ``n0`` until ``E^{k-1} - E^k < tau * eps``.

    ``n0`` must be unit length at every vertex; Dirichlet values are taken
    from ``n0`` and never change.  ``callback(k, state)`` is called after each
    step.  Raises :class:`EnergyIncrease` if the energy grows by more than
    ``energy_slack * (1 + |E|)``.
    """
    n = np.array(n0, dtype=float)
    if n.shape != (mesh.n_vertices, 3):
        raise ValueError(f"initial field must have shape {(mesh.n_vertices, 3)}, got {n.shape}")
    _check_unit(n)
    prob = FlowProblem(mesh, fc, dofmap, config.tau)
    state = FlowState(n=n.copy())
    e, grad = prob.evaluate(n)
    state.energies.append(e)
    state.err1.append(constraint_error(mesh, n, 1))
    state.err_inf.append(constraint_error(mesh, n, np.inf))
    threshold = config.tau * config.eps
    free = dofmap.free
    prev = np.inf
    step = None
    while True:
        cur = state.energies[-1].total
        if prev - cur < threshold:
            state.converged = True
            state.stop_reason = "energy decrease below tau*eps"
            break
        if state.steps >= config.max_steps:
            state.stop_reason = "max_steps reached"
            break
        # the increment changes slowly, so the previous one is a good guess
        step = prob.solve(n, grad, rel_tol=config.rel_tol, max_iter=config.max_minres_iter,
                          preconditioner=config.preconditioner, guess=step)
        if not step.converged:
            state.unconverged_steps.append(state.steps + 1)
            msg = f"MINRES did not converge at step {state.steps + 1} (residual {step.residual:.3e})"
            if config.raise_on_solver_failure:
                state.stop_reason = msg
                raise RuntimeError(msg)
            log.warning(msg)
        d = step.d
        n_new = n + config.tau * d
        len_old = np.einsum("ij,ij->i", n[free], n[free])
        len_new = np.einsum("ij,ij->i", n_new[free], n_new[free])
        dd = np.einsum("ij,ij->i", d[free], d[free])
        e_new, grad_new = prob.evaluate(n_new)
        if e_new.total > cur + config.energy_slack * (1.0 + abs(cur)):
            state.stop_reason = f"energy increased at step {state.steps + 1}"
            raise EnergyIncrease(f"energy increased from {cur!r} to {e_new.total!r} "
                                 f"at step {state.steps + 1}", state)
        dflat = dofmap.restrict(d)
        state.minres_iters.append(step.iterations)
        state.grad_increment_sq.append(float(dflat @ (prob.K @ dflat)))
        state.orthogonality.append(step.orthogonality)
        if len(free):
            state.step_law_defect.append(float(np.abs(len_new - len_old - config.tau ** 2 * dd).max()))
            state.min_length_change.append(float((len_new - len_old).min()))
        else:
            state.step_law_defect.append(0.0)
            state.min_length_change.append(0.0)
        n, grad = n_new, grad_new
        state.n = n
        state.k += 1
        state.energies.append(e_new)
        state.err1.append(constraint_error(mesh, n, 1))
        state.err_inf.append(constraint_error(mesh, n, np.inf))
        if not config.record_history:
            state._trim()
        prev = cur
        if callback is not None:
            callback(state.steps, state)
    return state
