"""Collocation discretization of the boundary integral operator.

The double-layer integrals of the linear shape functions over planar
triangles are evaluated in closed form: writing the kernel as
zeta / r^3 (zeta = signed distance of the collocation point to the triangle
plane) the integral splits into a signed solid-angle term and edge
integrals of 1/r, both of which are analytic.  Numerical quadrature is used
only as a test oracle, never in production assembly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mesh import SurfaceMesh, TetMesh

__all__ = [
    "green",
    "green_cross",
    "double_layer_triangle",
    "TrianglePanels",
    "CollocationAssembler",
    "BoundaryOperator",
    "assemble_dense",
    "apply_operator",
    "DENSE_CAP",
]

# Dense assembly refusal threshold: ~3.2 GB at 8 bytes/entry.
DENSE_CAP = 20_000

_FOUR_PI = 4.0 * math.pi


def green(x: np.ndarray, y: np.ndarray) -> float:
    """Green's function -1 / (4 pi |x - y|)."""
    r = float(np.linalg.norm(np.asarray(x, float) - np.asarray(y, float)))
    if r == 0.0:
        raise ValueError("Green's function is singular at coincident points")
    return -1.0 / (_FOUR_PI * r)


def green_cross(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Matrix of Green's function values between two point sets."""
    x = np.atleast_2d(x)
    y = np.atleast_2d(y)
    d = np.linalg.norm(x[:, None, :] - y[None, :, :], axis=2)
    if np.any(d == 0.0):
        raise ValueError("Green's function is singular at coincident points")
    return -1.0 / (_FOUR_PI * d)


@dataclass(frozen=True)
class TrianglePanels:
    """Precomputed per-triangle geometry for the analytic kernel."""

    verts: np.ndarray   # (T, 3, 3) vertex coordinates
    normals: np.ndarray  # (T, 3) unit normals
    grads: np.ndarray   # (T, 3, 3) in-plane shape-function gradients
    grad_dot_edge_normal: np.ndarray  # (T, 3, 3): grads[i] . outward normal of edge e
    cop_scale: np.ndarray  # (T,) length scale for the coplanarity guard


def build_panels(coords: np.ndarray, surface: SurfaceMesh) -> TrianglePanels:
    verts = coords[surface.triangles]                      # (T, 3, 3)
    nhat = surface.normals
    areas = surface.areas

    edges = np.stack(
        [verts[:, 1] - verts[:, 0], verts[:, 2] - verts[:, 1], verts[:, 0] - verts[:, 2]],
        axis=1,
    )                                                      # (T, 3edges, 3)
    slen = np.linalg.norm(edges, axis=2)
    if np.any(slen <= 0.0) or np.any(areas <= 0.0):
        raise ValueError("degenerate triangle in surface mesh")
    xi = edges / slen[:, :, None]
    # in-plane outward edge normals m_e = xi_e x n
    m_out = np.cross(xi, nhat[:, None, :])

    # grad of shape i is perpendicular to the opposite edge (edge i+1);
    # scaled so that grads[i] . (p_i - p_{i+1}) = 1.
    grads = np.empty_like(verts)
    for i in range(3):
        opp = (i + 1) % 3
        g = np.cross(nhat, edges[:, opp])                  # (T, 3)
        scale = np.einsum("tj,tj->t", g, verts[:, i] - verts[:, opp])
        grads[:, i] = g / scale[:, None]

    gm = np.einsum("tid,ted->tie", grads, m_out)
    cop = slen.max(axis=1)
    return TrianglePanels(
        verts=verts, normals=nhat, grads=grads, grad_dot_edge_normal=gm, cop_scale=cop
    )


def _panel_rows(x: np.ndarray, panels: TrianglePanels, sel: np.ndarray | None = None) -> np.ndarray:
    """Analytic integrals of (shape function * dG/dn) over each panel seen
    from collocation point ``x``; returns (T, 3) values ordered by the
    panel's local vertex numbering."""
    if sel is None:
        verts = panels.verts
        nhat = panels.normals
        grads = panels.grads
        gm = panels.grad_dot_edge_normal
        cop_scale = panels.cop_scale
    else:
        verts = panels.verts[sel]
        nhat = panels.normals[sel]
        grads = panels.grads[sel]
        gm = panels.grad_dot_edge_normal[sel]
        cop_scale = panels.cop_scale[sel]

    rho = verts - x[None, None, :]                         # (T, 3, 3)
    r = np.linalg.norm(rho, axis=2)                        # (T, 3)
    a, b, c = rho[:, 0], rho[:, 1], rho[:, 2]
    ra, rb, rc = r[:, 0], r[:, 1], r[:, 2]

    det = np.einsum("tj,tj->t", a, np.cross(b, c))
    den = (
        ra * rb * rc
        + np.einsum("tj,tj->t", a, b) * rc
        + np.einsum("tj,tj->t", b, c) * ra
        + np.einsum("tj,tj->t", c, a) * rb
    )
    omega = 2.0 * np.arctan2(det, den)                     # signed solid angle

    zeta = np.einsum("tj,tj->t", nhat, a)                  # n . (p0 - x)
    r_max = r.max(axis=1)
    coplanar = np.abs(zeta) <= 1e-12 * np.maximum(r_max, cop_scale)

    # barycentric coordinates of the in-plane projection of x
    proj = x[None, :] + zeta[:, None] * nhat               # (T, 3)
    lam = 1.0 + np.einsum("tid,tid->ti", grads, proj[:, None, :] - verts)

    # edge integrals of 1/r
    slen = np.linalg.norm(
        np.stack([verts[:, 1] - verts[:, 0], verts[:, 2] - verts[:, 1], verts[:, 0] - verts[:, 2]], axis=1),
        axis=2,
    )
    r_pair = np.stack([ra + rb, rb + rc, rc + ra], axis=1)
    num = r_pair + slen
    dnm = r_pair - slen
    safe = dnm > 0.0
    p_edge = np.zeros_like(num)
    np.log(np.divide(num, dnm, out=np.ones_like(num), where=safe), out=p_edge, where=safe)

    # kernel dG/dn = n . (x - x') / (4 pi r^3): negate the x'-side expression
    vals = -(lam * omega[:, None] - zeta[:, None] * np.einsum("tie,te->ti", gm, p_edge)) / _FOUR_PI
    vals[coplanar] = 0.0
    return vals


def double_layer_triangle(xi: np.ndarray, triangle: np.ndarray, local_vertex: int) -> float:
    """Closed-form integral over one triangle of the linear shape function of
    ``local_vertex`` times dG/dn, collocated at ``xi``.

    The triangle is given as a (3, 3) array of vertices (counter-clockwise
    seen from the side its normal points to).
    """
    tri = np.asarray(triangle, dtype=np.float64).reshape(3, 3)
    n = np.cross(tri[1] - tri[0], tri[2] - tri[0])
    nn = np.linalg.norm(n)
    if nn == 0.0:
        raise ValueError("degenerate triangle")
    surface = SurfaceMesh(
        triangles=np.array([[0, 1, 2]], dtype=np.int64),
        normals=(n / nn)[None, :],
        areas=np.array([0.5 * nn]),
    )
    panels = build_panels(tri, surface)
    vals = _panel_rows(np.asarray(xi, dtype=np.float64), panels)
    return float(vals[0, int(local_vertex)])


class CollocationAssembler:
    """Entry evaluator for the boundary operator M = K + D on a mesh.

    Provides the row/block access the compression engine needs without the
    engine knowing anything about triangles.
    """

    def __init__(self, mesh: TetMesh):
        self.coords = mesh.boundary_coords()
        self.surface = mesh.surface
        self.n = mesh.n_boundary
        self.panels = build_panels(self.coords, self.surface)
        self.tri_cols = self.surface.triangles               # (T, 3) boundary-local
        self.diag = mesh.boundary_solid_angles() / _FOUR_PI - 1.0

        # node -> incident triangle list (CSR layout)
        t = self.tri_cols
        order = np.argsort(t.reshape(-1), kind="stable")
        self._inc_tris = order // 3
        self._inc_offsets = np.searchsorted(t.reshape(-1)[order], np.arange(self.n + 1))

    def points(self) -> np.ndarray:
        return self.coords

    def triangles_of_columns(self, cols: np.ndarray) -> np.ndarray:
        """Sorted unique triangles incident to any of the given nodes."""
        parts = [self._inc_tris[self._inc_offsets[j]: self._inc_offsets[j + 1]] for j in cols]
        return np.unique(np.concatenate(parts)) if parts else np.empty(0, dtype=np.int64)

    def row_for_point(self, x: np.ndarray, cols: np.ndarray, tri_sel: np.ndarray | None = None) -> np.ndarray:
        """K-row of the double-layer operator at an arbitrary point, restricted
        to the given columns (no diagonal term)."""
        if tri_sel is None:
            tri_sel = self.triangles_of_columns(cols)
        vals = _panel_rows(x, self.panels, tri_sel)
        local = np.full(self.n, -1, dtype=np.int64)
        local[cols] = np.arange(cols.size)
        out = np.zeros(cols.size)
        dest = local[self.tri_cols[tri_sel]]
        keep = dest >= 0
        np.add.at(out, dest[keep], vals[keep])
        return out

    def block(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        """Dense sub-block of M = K + D."""
        tri_sel = self.triangles_of_columns(cols)
        local = np.full(self.n, -1, dtype=np.int64)
        local[cols] = np.arange(cols.size)
        dest = local[self.tri_cols[tri_sel]]
        keep = dest >= 0
        out = np.zeros((rows.size, cols.size))
        for k, i in enumerate(rows):
            vals = _panel_rows(self.coords[i], self.panels, tri_sel)
            np.add.at(out[k], dest[keep], vals[keep])
        row_local = local[rows]
        has_diag = row_local >= 0
        out[np.arange(rows.size)[has_diag], row_local[has_diag]] += self.diag[rows[has_diag]]
        return out

    def full_row(self, i: int) -> np.ndarray:
        """Complete row i of M = K + D."""
        vals = _panel_rows(self.coords[i], self.panels)
        out = np.zeros(self.n)
        np.add.at(out, self.tri_cols.reshape(-1), vals.reshape(-1))
        out[i] += self.diag[i]
        return out


@dataclass(frozen=True)
class BoundaryOperator:
    """Discretized operator mapping u1 boundary values to u2 boundary values."""

    backend: str            # "dense" | "h" | "h2"
    n: int
    diag: np.ndarray        # solid-angle diagonal Psi/4pi - 1
    payload: object         # ndarray or compressed-matrix object

    def apply(self, u1_boundary: np.ndarray) -> np.ndarray:
        return apply_operator(self, u1_boundary)

    def storage_bytes(self) -> int:
        if self.backend == "dense":
            return self.payload.size * 8
        return self.payload.storage_bytes()


def assemble_dense(mesh: TetMesh, cap: int = DENSE_CAP) -> BoundaryOperator:
    """Reference dense assembly of M = K + D (collocation rows)."""
    asm = CollocationAssembler(mesh)
    if asm.n > cap:
        raise ValueError(
            f"dense backend refused for N = {asm.n} > {cap}; use the h2 backend"
        )
    mat = np.empty((asm.n, asm.n))
    for i in range(asm.n):
        mat[i] = asm.full_row(i)
    return BoundaryOperator(backend="dense", n=asm.n, diag=asm.diag, payload=mat)


def apply_operator(op: BoundaryOperator, u1_boundary: np.ndarray) -> np.ndarray:
    """Apply the operator; all backends honour the same contract."""
    u1_boundary = np.asarray(u1_boundary, dtype=np.float64)
    if u1_boundary.shape != (op.n,):
        raise ValueError(f"vector must have shape ({op.n},)")
    if op.backend == "dense":
        return op.payload @ u1_boundary
    return op.payload.matvec(u1_boundary)
