"""Hybrid cross approximation of admissible blocks.

The smooth Green's function is interpolated on tensor Chebyshev grids in the
two cluster boxes; a fully pivoted cross of the interpolation coefficient
matrix then selects a small set of interpolation points, and the normal
derivative / shape-function integration is applied analytically only at
those points.
"""

from __future__ import annotations

import warnings

import numpy as np

from ..bem import CollocationAssembler, green_cross
from .cluster import Cluster, ClusterTree, is_admissible
from .lowrank import LowRankBlock, aca, aca_full, truncate_lowrank

__all__ = ["chebyshev_points", "hca_block", "aca_block"]

_COND_LIMIT = 1e12


def chebyshev_points(lo: np.ndarray, hi: np.ndarray, order: int) -> np.ndarray:
    """Tensor grid of order^3 Chebyshev points in an axis-aligned box.

    Degenerate (zero-extent) axes collapse to the box midplane.
    """
    if order < 1:
        raise ValueError("Chebyshev order must be >= 1")
    nodes = np.cos((2.0 * np.arange(order) + 1.0) * np.pi / (2.0 * order))
    axes = [0.5 * (lo[d] + hi[d]) + 0.5 * (hi[d] - lo[d]) * nodes for d in range(3)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    return grid.reshape(-1, 3)


def aca_block(
    assembler: CollocationAssembler,
    tree: ClusterTree,
    t: Cluster,
    s: Cluster,
    epsilon: float,
    max_rank: int | None = None,
) -> LowRankBlock:
    """Partially pivoted ACA on the operator block itself (fallback path)."""
    rows = tree.indices(t)
    cols = tree.indices(s)
    tri_sel = assembler.triangles_of_columns(cols)

    def row_eval(i: int) -> np.ndarray:
        return assembler.row_for_point(assembler.coords[rows[i]], cols, tri_sel)

    def col_eval(j: int) -> np.ndarray:
        return assembler.block(rows, cols[j:j + 1])[:, 0]

    return aca(row_eval, col_eval, rows.size, cols.size, epsilon, max_rank)


def hca_block(
    assembler: CollocationAssembler,
    tree: ClusterTree,
    t: Cluster,
    s: Cluster,
    order: int,
    epsilon: float,
    eta: float,
) -> LowRankBlock:
    """Low-rank factorization of the admissible block (t, s).

    The kernel is expanded as G(x, x') ~ sum_{nu,mu} c_{nu,mu} G(x, eta'_mu)
    G(eta_nu, x') over the pivot interpolation points chosen by a full-pivot
    cross of S_{nu,mu} = G(eta_nu, eta'_mu); applying the boundary-integral
    row evaluation at the eta_nu pivots yields B, and collocation of G at
    the eta'_mu pivots yields A.
    """
    if not is_admissible(t, s, eta):
        raise ValueError("hca_block requires an admissible cluster pair")
    rows = tree.indices(t)
    cols = tree.indices(s)

    eta_t = chebyshev_points(t.bbox_min, t.bbox_max, order)
    eta_s = chebyshev_points(s.bbox_min, s.bbox_max, order)
    s_mat = green_cross(eta_t, eta_s)
    tau, sigma = aca_full(s_mat, epsilon)
    if tau.size == 0:
        return LowRankBlock(a=np.zeros((rows.size, 0)), b=np.zeros((cols.size, 0)))

    cross = s_mat[np.ix_(tau, sigma)]
    if np.linalg.cond(cross) > _COND_LIMIT:
        warnings.warn("ill-conditioned interpolation cross; falling back to ACA",
                      RuntimeWarning, stacklevel=2)
        return aca_block(assembler, tree, t, s, epsilon)

    # a_{i,nu} = sum_mu c_{nu,mu} G(xi_i, eta'_mu) with c = cross^{-1}
    g_cols = green_cross(assembler.coords[rows], eta_s[sigma])
    a = np.linalg.solve(cross.T, g_cols.T).T          # (|t|, k)

    tri_sel = assembler.triangles_of_columns(cols)
    b = np.stack(
        [assembler.row_for_point(eta_t[nu], cols, tri_sel) for nu in tau], axis=1
    )                                                  # (|s|, k)

    a, b = truncate_lowrank(a, b, epsilon)
    return LowRankBlock(a=a, b=b)
