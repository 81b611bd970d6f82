"""Iterative Krylov solvers for the sparse FEM systems.

The pure-Neumann problem is singular (constants in the kernel); it is handled
by deflation: the constant mode is projected out of the right-hand side and
of every iterate, which keeps the operator symmetric on the complement.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import spmatrix

from .errors import ConvergenceError

__all__ = ["SolveReport", "cg_solve", "bicgstab_solve", "jacobi_preconditioner"]


@dataclass(frozen=True)
class SolveReport:
    iterations: int
    residual: float  # final relative residual ||b - A x|| / ||b||
    converged: bool


def jacobi_preconditioner(a: spmatrix):
    """Return the action of diag(A)^-1 as a callable."""
    diag = np.asarray(a.diagonal(), dtype=np.float64)
    if np.any(diag == 0.0):
        raise ValueError("Jacobi preconditioner requires a zero-free diagonal")
    inv = 1.0 / diag

    def apply(r: np.ndarray) -> np.ndarray:
        return inv * r

    return apply


def _deflate(v: np.ndarray) -> np.ndarray:
    return v - v.mean()


def cg_solve(
    a: spmatrix,
    b: np.ndarray,
    tol: float = 1e-10,
    max_iter: int | None = None,
    deflate_constants: bool = False,
    precond=None,
) -> tuple[np.ndarray, SolveReport]:
    """Preconditioned conjugate gradients for a symmetric PSD system.

    With ``deflate_constants`` the system may be singular with constant
    kernel; ``b`` must then be compatible (orthogonal to constants) and the
    returned solution has zero mean.
    """
    n = b.shape[0]
    if max_iter is None:
        max_iter = 10 * n
    b = np.asarray(b, dtype=np.float64)
    b_norm = np.linalg.norm(b)
    if b_norm == 0.0:
        return np.zeros(n), SolveReport(0, 0.0, True)

    if deflate_constants:
        if abs(b.sum()) > 1e-10 * np.abs(b).sum():
            raise ValueError("incompatible rhs: not orthogonal to the constant kernel")
        b = _deflate(b)

    x = np.zeros(n)
    r = b.copy()
    z = precond(r) if precond is not None else r
    if deflate_constants:
        z = _deflate(z)
    p = z.copy()
    rz = float(r @ z)
    it = 0
    res = np.linalg.norm(r) / b_norm
    while res > tol and it < max_iter:
        ap = a @ p
        pap = float(p @ ap)
        if pap <= 0.0:
            raise ConvergenceError(f"negative curvature encountered in CG (p'Ap = {pap:g})")
        alpha = rz / pap
        x += alpha * p
        r -= alpha * ap
        z = precond(r) if precond is not None else r
        if deflate_constants:
            z = _deflate(z)
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
        it += 1
        res = np.linalg.norm(r) / b_norm
    if deflate_constants:
        x = _deflate(x)
    return x, SolveReport(it, res, res <= tol)


def bicgstab_solve(
    a: spmatrix,
    b: np.ndarray,
    tol: float = 1e-10,
    max_iter: int | None = None,
    precond=None,
) -> tuple[np.ndarray, SolveReport]:
    """BiCGStab for a general nonsingular system; restarts once on breakdown."""
    n = b.shape[0]
    if max_iter is None:
        max_iter = 10 * n
    b = np.asarray(b, dtype=np.float64)
    b_norm = np.linalg.norm(b)
    if b_norm == 0.0:
        return np.zeros(n), SolveReport(0, 0.0, True)

    x = np.zeros(n)
    restarted = False
    it = 0
    while True:
        r = b - a @ x
        r_hat = r.copy()
        rho = alpha = omega = 1.0
        v = p = np.zeros(n)
        broke = False
        while it < max_iter:
            res = np.linalg.norm(r) / b_norm
            if res <= tol:
                return x, SolveReport(it, res, True)
            rho_new = float(r_hat @ r)
            if abs(rho_new) < 1e-300 or (it > 0 and abs(omega) < 1e-300):
                broke = True
                break
            if it == 0 or rho == 0.0:
                p = r.copy()
            else:
                beta = (rho_new / rho) * (alpha / omega)
                p = r + beta * (p - omega * v)
            rho = rho_new
            ph = precond(p) if precond is not None else p
            v = a @ ph
            denom = float(r_hat @ v)
            if abs(denom) < 1e-300:
                broke = True
                break
            alpha = rho / denom
            s = r - alpha * v
            sh = precond(s) if precond is not None else s
            t = a @ sh
            tt = float(t @ t)
            omega = float(t @ s) / tt if tt > 0.0 else 0.0
            x = x + alpha * ph + omega * sh
            r = s - omega * t
            it += 1
        res = np.linalg.norm(b - a @ x) / b_norm
        if res <= tol:
            return x, SolveReport(it, res, True)
        if broke and not restarted:
            restarted = True
            continue
        if broke:
            raise ConvergenceError(f"BiCGStab breakdown after restart (residual {res:g})")
        return x, SolveReport(it, res, False)
