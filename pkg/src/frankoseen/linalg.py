"""Block saddle-point operators and a MINRES solver for symmetric,
possibly indefinite systems."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp


class SolverBreakdown(RuntimeError):
    """The operator or preconditioner violates the MINRES assumptions."""


@dataclass(frozen=True)
class SaddleOperator:
    """The symmetric block operator [[A, B^T], [B, 0]].

    A acts on the primal unknowns (size n), B has one row per multiplier
    (size m).  Either block may be a scipy sparse matrix or dense array.
    """

    A: sp.spmatrix
    B: sp.spmatrix

    def __post_init__(self):
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise ValueError(f"A must be square, got {self.A.shape}")
        if self.B.shape[1] != n:
            raise ValueError(f"B has {self.B.shape[1]} columns, A has {n}")
        BT = self.B.T.tocsr() if sp.issparse(self.B) else np.asarray(self.B).T
        object.__setattr__(self, "_BT", BT)

    @property
    def n_primal(self) -> int:
        return self.A.shape[0]

    @property
    def n_multiplier(self) -> int:
        return self.B.shape[0]

    @property
    def shape(self):
        s = self.n_primal + self.n_multiplier
        return (s, s)

    def split(self, x):
        return x[:self.n_primal], x[self.n_primal:]

    def matvec(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        if x.shape != (self.shape[0],):
            raise ValueError(f"expected a vector of length {self.shape[0]}, got shape {x.shape}")
        u, lam = self.split(x)
        return np.concatenate([self.A @ u + self._BT @ lam, self.B @ u])

    __matmul__ = matvec

    def toarray(self) -> np.ndarray:
        A = self.A.toarray() if sp.issparse(self.A) else np.asarray(self.A)
        B = self.B.toarray() if sp.issparse(self.B) else np.asarray(self.B)
        m = B.shape[0]
        return np.block([[A, B.T], [B, np.zeros((m, m))]])


def apply_saddle(op: SaddleOperator, x: np.ndarray) -> np.ndarray:
    return op.matvec(x)


@dataclass
class MinresResult:
    x: np.ndarray
    residual: float          # true 2-norm residual ||b - A x||
    iterations: int
    converged: bool
    history: list = field(default_factory=list)   # MINRES residual estimates per iteration


def _as_matvec(op) -> Callable:
    if callable(op) and not hasattr(op, "shape"):
        return op
    if hasattr(op, "matvec"):
        return op.matvec
    return lambda v: op @ v


def minres(op, rhs: np.ndarray, rel_tol: float = 1e-10, max_iter: Optional[int] = None,
           preconditioner: Optional[Callable] = None, check_symmetry: bool = True,
           rng_seed: int = 0, x0: Optional[np.ndarray] = None) -> MinresResult:
    """Solve ``op x = rhs`` by the minimal residual method.

    ``preconditioner`` applies an SPD approximation of ``op^{-1}``.  The
    iteration stops once the true residual satisfies
    ``||rhs - op x|| <= rel_tol * ||rhs||`` or after ``max_iter`` iterations
    (default ten times the system size); non-convergence is reported through
    ``converged`` and is not an error.  ``x0`` is an optional initial guess;
    the tolerance stays relative to ``||rhs||``.
    """
    b = np.asarray(rhs, dtype=float)
    n = b.size
    A = _as_matvec(op)
    M = preconditioner if preconditioner is not None else (lambda v: v)
    max_iter = 10 * n if max_iter is None else max_iter
    bnorm = np.linalg.norm(b)
    if not np.all(np.isfinite(b)):
        raise ValueError("right-hand side is not finite")
    if bnorm == 0:
        return MinresResult(np.zeros(n), 0.0, 0, True, [])
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    if x.shape != (n,):
        raise ValueError(f"x0 has shape {x.shape}, expected ({n},)")

    if check_symmetry:
        rng = np.random.default_rng(rng_seed)
        u, v = rng.standard_normal(n), rng.standard_normal(n)
        Au, Av = A(u), A(v)
        scale = np.linalg.norm(Au) * np.linalg.norm(v) + np.linalg.norm(Av) * np.linalg.norm(u)
        if abs(Au @ v - u @ Av) > 1e-10 * max(scale, np.finfo(float).tiny):
            raise SolverBreakdown("operator is not symmetric")

    target = rel_tol * bnorm
    r1 = b.copy() if x0 is None else b - A(x)
    if np.linalg.norm(r1) <= target:
        return MinresResult(x, float(np.linalg.norm(r1)), 0, True, [])
    y = M(r1)
    beta1 = r1 @ y
    if beta1 <= 0:
        raise SolverBreakdown("preconditioner is not positive definite")
    beta1 = np.sqrt(beta1)
    oldb, beta, dbar, epsln = 0.0, beta1, 0.0, 0.0
    phibar, cs, sn = beta1, -1.0, 0.0
    w = np.zeros(n)
    w2 = np.zeros(n)
    r2 = r1.copy()
    history = []
    resid = bnorm
    itn = 0
    converged = False
    # the preconditioned estimate phibar tracks the residual in the M^{-1}
    # norm; the 2-norm is checked exactly whenever the estimate suggests it
    ratio = 1.0
    while itn < max_iter:
        itn += 1
        s = 1.0 / beta
        v = s * y
        y = A(v)
        if itn >= 2:
            y = y - (beta / oldb) * r1
        alfa = v @ y
        y = y - (alfa / beta) * r2
        r1, r2 = r2, y
        y = M(r2)
        oldb = beta
        beta2 = r2 @ y
        if beta2 < 0:
            raise SolverBreakdown("preconditioner is not positive definite")
        beta = np.sqrt(beta2)
        oldeps = epsln
        delta = cs * dbar + sn * alfa
        gbar = sn * dbar - cs * alfa
        epsln = sn * beta
        dbar = -cs * beta
        gamma = np.hypot(gbar, beta)
        if gamma == 0:
            raise SolverBreakdown("singular operator encountered in MINRES")
        cs, sn = gbar / gamma, beta / gamma
        phi = cs * phibar
        phibar = sn * phibar
        w1, w2 = w2, w
        w = (v - oldeps * w1 - delta * w2) / gamma
        x = x + phi * w
        history.append(phibar * ratio)
        if phibar * ratio <= target or beta == 0:
            resid = np.linalg.norm(b - A(x))
            if resid <= target:
                converged = True
                break
            # estimate is optimistic in the 2-norm: recalibrate
            ratio = max(ratio, resid / max(phibar, np.finfo(float).tiny))
            if beta == 0:
                break
    else:
        resid = np.linalg.norm(b - A(x))
        converged = resid <= target
    return MinresResult(x, float(resid), itn, converged, history)


def block_diagonal_preconditioner(A_diag_inverse: Callable, S_diag: np.ndarray, n_primal: int) -> Callable:
    """SPD preconditioner diag(P_A, S^{-1}) for a saddle operator."""
    S_inv = 1.0 / np.asarray(S_diag, dtype=float)

    def apply(r):
        out = np.empty_like(r)
        out[:n_primal] = A_diag_inverse(r[:n_primal])
        out[n_primal:] = S_inv * r[n_primal:]
        return out

    return apply
