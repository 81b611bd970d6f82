"""P1 finite elements on tetrahedra: stiffness assembly, the Neumann and
Dirichlet potential solves, field evaluation and magnetostatic energy.

Everything is dimensionless with mu0 = 1 and Ms = 1; energy densities are
also reported normalized by the stray field constant K_d = 1/2.
"""

from __future__ import annotations

import numpy as np
from scipy.sparse import coo_matrix, csr_matrix

from .errors import MeshError
from .mesh import TetMesh, tet_volumes
from .solver import SolveReport, cg_solve, jacobi_preconditioner

__all__ = [
    "tet_gradients",
    "assemble_stiffness",
    "assemble_u1_rhs",
    "solve_u1",
    "solve_u2",
    "compute_field",
    "magnetostatic_energy",
    "STRAY_FIELD_CONSTANT",
]

# K_d = mu0 * Ms^2 / 2 in the dimensionless units used throughout.
STRAY_FIELD_CONSTANT = 0.5


def tet_gradients(mesh: TetMesh) -> tuple[np.ndarray, np.ndarray]:
    """Per-tet volumes and P1 shape-function gradients.

    Returns ``(vols, grads)`` with ``vols`` of shape (m,) and ``grads`` of
    shape (m, 4, 3); gradients are constant on each tet.
    """
    vols = tet_volumes(mesh.nodes, mesh.tets)
    bad = np.flatnonzero(vols <= 0.0)
    if bad.size:
        raise MeshError(f"tetrahedron {int(bad[0])} is degenerate (volume {vols[bad[0]]:g})")
    p = mesh.nodes[mesh.tets]
    jac = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0], p[:, 3] - p[:, 0]], axis=1)
    inv = np.linalg.inv(jac)                  # (m, 3, 3); row i of inv' = grad lambda_{i+1}
    grads = np.empty((vols.shape[0], 4, 3))
    grads[:, 1:] = np.swapaxes(inv, 1, 2)
    grads[:, 0] = -grads[:, 1:].sum(axis=1)
    return vols, grads


def assemble_stiffness(mesh: TetMesh) -> csr_matrix:
    """Assemble the P1 stiffness matrix of integral(grad phi_i . grad phi_j).

    Symmetric positive-semidefinite with the constants in its kernel.
    """
    vols, grads = tet_gradients(mesh)
    ke = np.einsum("t,tid,tjd->tij", vols, grads, grads)  # (m, 4, 4)
    rows = np.repeat(mesh.tets, 4, axis=1).reshape(-1)
    cols = np.tile(mesh.tets, (1, 4)).reshape(-1)
    n = mesh.n_nodes
    a = coo_matrix((ke.reshape(-1), (rows, cols)), shape=(n, n))
    return a.tocsr()


def assemble_u1_rhs(mesh: TetMesh, m_nodal: np.ndarray) -> np.ndarray:
    """Weak right-hand side b_i = integral(M . grad phi_i) for the Neumann
    problem; the single volume term carries both the volume charges and the
    M.n surface flux after integration by parts."""
    if m_nodal.shape != (mesh.n_nodes, 3):
        raise ValueError(f"magnetization must have shape ({mesh.n_nodes}, 3)")
    vols, grads = tet_gradients(mesh)
    m_bar = m_nodal[mesh.tets].mean(axis=1)   # exact for P1 magnetization
    contrib = np.einsum("t,td,tid->ti", vols, m_bar, grads)
    b = np.zeros(mesh.n_nodes)
    np.add.at(b, mesh.tets.reshape(-1), contrib.reshape(-1))
    return b


def solve_u1(
    mesh: TetMesh,
    m_nodal: np.ndarray,
    tol: float = 1e-10,
    max_iter: int | None = None,
    stiffness: csr_matrix | None = None,
) -> tuple[np.ndarray, SolveReport]:
    """Solve the singular Neumann problem for the zero-mean potential u1."""
    a = assemble_stiffness(mesh) if stiffness is None else stiffness
    b = assemble_u1_rhs(mesh, m_nodal)
    if np.linalg.norm(b) == 0.0:
        return np.zeros(mesh.n_nodes), SolveReport(0, 0.0, True)
    x, report = cg_solve(
        a, b, tol=tol, max_iter=max_iter,
        deflate_constants=True, precond=jacobi_preconditioner(a),
    )
    return x, report


def solve_u2(
    mesh: TetMesh,
    dirichlet: np.ndarray,
    tol: float = 1e-10,
    max_iter: int | None = None,
    stiffness: csr_matrix | None = None,
) -> tuple[np.ndarray, SolveReport]:
    """Solve the Laplace problem for u2 given boundary values (one per
    boundary node, in boundary-local order)."""
    if dirichlet.shape != (mesh.n_boundary,):
        raise ValueError(f"dirichlet data must have shape ({mesh.n_boundary},)")
    a = assemble_stiffness(mesh) if stiffness is None else stiffness
    u = np.zeros(mesh.n_nodes)
    u[mesh.boundary_nodes] = dirichlet

    interior = np.setdiff1d(np.arange(mesh.n_nodes), mesh.boundary_nodes)
    if interior.size == 0:
        return u, SolveReport(0, 0.0, True)
    a_ii = a[interior][:, interior].tocsr()
    rhs = -(a[interior] @ u)
    x, report = cg_solve(a_ii, rhs, tol=tol, max_iter=max_iter,
                         precond=jacobi_preconditioner(a_ii))
    u[interior] = x
    return u, report


def compute_field(mesh: TetMesh, u: np.ndarray) -> np.ndarray:
    """Per-tet constant field H = -grad(u) of the P1 interpolant."""
    if u.shape != (mesh.n_nodes,):
        raise ValueError(f"potential must have shape ({mesh.n_nodes},)")
    _, grads = tet_gradients(mesh)
    return -np.einsum("ti,tid->td", u[mesh.tets], grads)


def magnetostatic_energy(
    mesh: TetMesh, m_nodal: np.ndarray, h_tet: np.ndarray
) -> tuple[float, float]:
    """Energy density e_d = -1/2 <M . H> and its value in units of K_d.

    The nodal magnetization is averaged to the tet centroid, matching the
    1-point quadrature that is exact for the P1/constant integrand.
    """
    if h_tet.shape != (mesh.n_tets, 3):
        raise ValueError(f"field must have shape ({mesh.n_tets}, 3)")
    vols = tet_volumes(mesh.nodes, mesh.tets)
    m_bar = m_nodal[mesh.tets].mean(axis=1)
    energy = -0.5 * np.einsum("t,td,td->", vols, m_bar, h_tet)
    e_d = energy / vols.sum()
    return e_d, e_d / STRAY_FIELD_CONSTANT
