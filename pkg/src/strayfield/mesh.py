"""Tetrahedral meshes of the test geometries with oriented boundary surfaces.

All meshes are dimensionless: the magnetostatic problem solved downstream is
scale invariant, so only aspect ratios matter.  A constructed mesh is
immutable and safe to share between threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import MeshError, MshParseError, NonManifoldError

__all__ = [
    "SurfaceMesh",
    "TetMesh",
    "generate_prism_mesh",
    "generate_sphere_mesh",
    "generate_torus_mesh",
    "load_msh",
    "save_msh",
    "extract_surface",
    "node_solid_angle",
    "tet_volumes",
]


@dataclass(frozen=True)
class SurfaceMesh:
    """Closed, oriented boundary triangulation.

    ``triangles`` index into the boundary-local numbering (positions in
    ``TetMesh.boundary_nodes``), counter-clockwise when seen from outside.
    """

    triangles: np.ndarray  # (T, 3) int64, boundary-local indices
    normals: np.ndarray    # (T, 3) float64, unit outward
    areas: np.ndarray      # (T,) float64, positive

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    def total_area(self) -> float:
        return float(self.areas.sum())


@dataclass(frozen=True)
class TetMesh:
    """Tetrahedral volume mesh with extracted boundary surface.

    ``boundary_nodes[b]`` is the volume node index of boundary-local node
    ``b``; ``surface`` is expressed in boundary-local indices.
    """

    nodes: np.ndarray           # (n, 3) float64
    tets: np.ndarray            # (m, 4) int64, positively oriented
    boundary_nodes: np.ndarray  # (nb,) int64, volume indices
    surface: SurfaceMesh
    solid_angles: np.ndarray = field(repr=False, default=None)  # (n,) steradians

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_tets(self) -> int:
        return self.tets.shape[0]

    @property
    def n_boundary(self) -> int:
        return self.boundary_nodes.shape[0]

    def boundary_coords(self) -> np.ndarray:
        return self.nodes[self.boundary_nodes]

    def boundary_solid_angles(self) -> np.ndarray:
        return self.solid_angles[self.boundary_nodes]

    def is_boundary_node(self, node: int) -> bool:
        return bool(np.isin(node, self.boundary_nodes))


def tet_volumes(nodes: np.ndarray, tets: np.ndarray) -> np.ndarray:
    """Signed volumes of the tetrahedra under their stored vertex order."""
    p = nodes[tets]
    a = p[:, 1] - p[:, 0]
    b = p[:, 2] - p[:, 0]
    c = p[:, 3] - p[:, 0]
    return np.einsum("ij,ij->i", a, np.cross(b, c)) / 6.0


def _vertex_solid_angles(nodes: np.ndarray, tets: np.ndarray) -> np.ndarray:
    """Accumulate, per node, the solid angles subtended by the opposite faces
    of all incident tetrahedra (Van Oosterom-Strackee)."""
    out = np.zeros(nodes.shape[0])
    p = nodes[tets]  # (m, 4, 3)
    for s in range(4):
        a = p[:, (s + 1) % 4] - p[:, s]
        b = p[:, (s + 2) % 4] - p[:, s]
        c = p[:, (s + 3) % 4] - p[:, s]
        na = np.linalg.norm(a, axis=1)
        nb = np.linalg.norm(b, axis=1)
        nc = np.linalg.norm(c, axis=1)
        det = np.abs(np.einsum("ij,ij->i", a, np.cross(b, c)))
        den = (
            na * nb * nc
            + np.einsum("ij,ij->i", a, b) * nc
            + np.einsum("ij,ij->i", a, c) * nb
            + np.einsum("ij,ij->i", b, c) * na
        )
        omega = 2.0 * np.arctan2(det, den)
        np.add.at(out, tets[:, s], omega)
    return out


def node_solid_angle(mesh: TetMesh, node: int) -> float:
    """Solid angle (steradians) subtended at a node by the incident volume.

    Boundary nodes give the interior angle in (0, 4*pi); interior nodes give
    4*pi (useful as a self-test of the geometric computation).
    """
    if not 0 <= node < mesh.n_nodes:
        raise IndexError(f"node index {node} out of range [0, {mesh.n_nodes})")
    return float(mesh.solid_angles[node])


_FACE_SLOTS = np.array([[1, 2, 3], [0, 3, 2], [0, 1, 3], [0, 2, 1]])


def extract_surface(nodes: np.ndarray, tets: np.ndarray) -> tuple[np.ndarray, SurfaceMesh]:
    """Extract the oriented boundary surface of a tet mesh.

    Faces appearing in exactly one tet form the boundary; their normals are
    oriented away from the owning tet's fourth vertex.  Returns the sorted
    volume indices of boundary nodes and the boundary-local surface mesh.
    """
    m = tets.shape[0]
    faces = tets[:, _FACE_SLOTS]              # (m, 4, 3)
    flat = faces.reshape(-1, 3)               # (4m, 3)
    keys = np.sort(flat, axis=1)
    _, first, inverse, counts = np.unique(
        keys, axis=0, return_index=True, return_inverse=True, return_counts=True
    )
    if counts.max() > 2:
        raise NonManifoldError("a face is shared by more than two tetrahedra")

    boundary_face_pos = first[counts == 1]    # positions into flat
    tri = flat[boundary_face_pos]             # stored vertex order
    owner_tet = boundary_face_pos // 4
    slot = boundary_face_pos % 4
    opposite = tets[owner_tet, slot]

    p0 = nodes[tri[:, 0]]
    e1 = nodes[tri[:, 1]] - p0
    e2 = nodes[tri[:, 2]] - p0
    n = np.cross(e1, e2)
    inward = np.einsum("ij,ij->i", n, nodes[opposite] - p0) > 0
    tri[inward] = tri[inward][:, [0, 2, 1]]
    n[inward] *= -1.0

    norms = np.linalg.norm(n, axis=1)
    if np.any(norms <= 0.0):
        raise MeshError("degenerate boundary triangle with zero area")
    areas = 0.5 * norms
    normals = n / norms[:, None]

    boundary_nodes = np.unique(tri)
    local = np.full(nodes.shape[0], -1, dtype=np.int64)
    local[boundary_nodes] = np.arange(boundary_nodes.size)
    triangles = local[tri]

    surface = SurfaceMesh(triangles=triangles, normals=normals, areas=areas)
    _validate_surface(nodes[boundary_nodes], surface)
    return boundary_nodes, surface


def _validate_surface(coords: np.ndarray, surface: SurfaceMesh) -> None:
    tri = surface.triangles
    edges = np.sort(tri[:, [[0, 1], [1, 2], [2, 0]]].reshape(-1, 2), axis=1)
    _, counts = np.unique(edges, axis=0, return_counts=True)
    if not np.all(counts == 2):
        raise NonManifoldError("boundary surface is not closed: dangling edge found")
    flux = np.einsum("i,ij->j", surface.areas, surface.normals)
    if np.linalg.norm(flux) > 1e-12 * surface.areas.sum():
        raise MeshError("closed-surface identity violated: sum(area * normal) != 0")


def _build(nodes: np.ndarray, tets: np.ndarray, reorient: bool) -> TetMesh:
    nodes = np.ascontiguousarray(nodes, dtype=np.float64)
    tets = np.ascontiguousarray(tets, dtype=np.int64)
    if not np.all(np.isfinite(nodes)):
        raise MeshError("non-finite node coordinates")
    if tets.min(initial=0) < 0 or tets.max(initial=-1) >= nodes.shape[0]:
        raise MeshError("tet connectivity references a node out of range")

    vols = tet_volumes(nodes, tets)
    if reorient:
        flipped = vols < 0.0
        tets[flipped] = tets[flipped][:, [0, 1, 3, 2]]
        vols = np.abs(vols)
    bad = np.flatnonzero(vols <= 0.0)
    if bad.size:
        raise MeshError(f"tetrahedron {int(bad[0])} has non-positive volume {vols[bad[0]]:g}")

    boundary_nodes, surface = extract_surface(nodes, tets)
    angles = _vertex_solid_angles(nodes, tets)
    nodes.setflags(write=False)
    tets.setflags(write=False)
    return TetMesh(
        nodes=nodes,
        tets=tets,
        boundary_nodes=boundary_nodes,
        surface=surface,
        solid_angles=angles,
    )


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------

def generate_prism_mesh(a: float, b: float, c: float, nx: int, ny: int, nz: int) -> TetMesh:
    """Structured mesh of the prism [0,a]x[0,b]x[0,c].

    Each hexahedral cell is split into the six tetrahedra sharing the cell's
    main diagonal (Kuhn split), which conforms across neighbouring cells.
    """
    if min(a, b, c) <= 0.0:
        raise ValueError("prism dimensions must be positive")
    if min(nx, ny, nz) < 1:
        raise ValueError("subdivision counts must be >= 1")

    xs = np.linspace(0.0, a, nx + 1)
    ys = np.linspace(0.0, b, ny + 1)
    zs = np.linspace(0.0, c, nz + 1)
    X, Y, Z = np.meshgrid(xs, ys, zs, indexing="ij")
    nodes = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)

    def nid(i, j, k):
        return (i * (ny + 1) + j) * (nz + 1) + k

    # Six monotone lattice paths from (0,0,0) to (1,1,1) within each cell.
    paths = []
    for perm in ((0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)):
        corners = [np.zeros(3, dtype=np.int64)]
        for axis in perm:
            nxt = corners[-1].copy()
            nxt[axis] += 1
            corners.append(nxt)
        paths.append(np.array(corners))

    ci, cj, ck = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij")
    ci, cj, ck = ci.ravel(), cj.ravel(), ck.ravel()
    tets = np.empty((ci.size * 6, 4), dtype=np.int64)
    for p, corners in enumerate(paths):
        for v in range(4):
            di, dj, dk = corners[v]
            tets[p::6, v] = nid(ci + di, cj + dj, ck + dk)
    return _build(nodes, tets, reorient=True)


_ICO_T = (1.0 + math.sqrt(5.0)) / 2.0
_ICO_VERTS = np.array(
    [
        (-1, _ICO_T, 0), (1, _ICO_T, 0), (-1, -_ICO_T, 0), (1, -_ICO_T, 0),
        (0, -1, _ICO_T), (0, 1, _ICO_T), (0, -1, -_ICO_T), (0, 1, -_ICO_T),
        (_ICO_T, 0, -1), (_ICO_T, 0, 1), (-_ICO_T, 0, -1), (-_ICO_T, 0, 1),
    ],
    dtype=np.float64,
)
_ICO_FACES = np.array(
    [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ],
    dtype=np.int64,
)


def _icosphere(refinement: int) -> tuple[np.ndarray, np.ndarray]:
    """Unit icosphere: vertices on the unit sphere, outward-oriented faces."""
    verts = [v / np.linalg.norm(v) for v in _ICO_VERTS]
    faces = _ICO_FACES.tolist()
    for _ in range(refinement):
        midpoint: dict[tuple[int, int], int] = {}

        def mid(i, j):
            key = (i, j) if i < j else (j, i)
            if key not in midpoint:
                v = verts[i] + verts[j]
                verts.append(v / np.linalg.norm(v))
                midpoint[key] = len(verts) - 1
            return midpoint[key]

        new_faces = []
        for i, j, k in faces:
            ij, jk, ki = mid(i, j), mid(j, k), mid(k, i)
            new_faces += [(i, ij, ki), (j, jk, ij), (k, ki, jk), (ij, jk, ki)]
        faces = new_faces
    return np.array(verts), np.array(faces, dtype=np.int64)


def _split_quad(q0: int, q1: int, q2: int, q3: int):
    """Split a (cyclically ordered) quad by the diagonal through its
    lowest-index corner; depends only on global vertex ids, so shared faces
    split identically in neighbouring cells."""
    quad = (q0, q1, q2, q3)
    m = min(range(4), key=lambda i: quad[i])
    return (
        (quad[m], quad[(m + 1) % 4], quad[(m + 2) % 4]),
        (quad[m], quad[(m + 2) % 4], quad[(m + 3) % 4]),
    )


def _split_prism(bot: tuple[int, int, int], top: tuple[int, int, int]) -> list[tuple[int, int, int, int]]:
    """Split a triangular prism (top[i] above bot[i]) into three tets by
    coning its lowest-index vertex against all faces not containing it."""
    ids = list(bot) + list(top)
    apex = min(ids)
    faces = [tuple(bot), tuple(top)]
    for i in range(3):
        j = (i + 1) % 3
        faces += list(_split_quad(bot[i], bot[j], top[j], top[i]))
    return [(apex, *f) for f in faces if apex not in f]


def generate_sphere_mesh(radius: float, refinement: int) -> TetMesh:
    """Tetrahedral ball built from radially layered icospheres.

    ``refinement`` is the number of icosphere subdivisions; the boundary has
    10 * 4**refinement + 2 nodes lying exactly on the sphere.  The number of
    radial layers grows as 2**refinement so element sizes stay balanced.
    """
    if radius <= 0.0:
        raise ValueError("sphere radius must be positive")
    if refinement < 0:
        raise ValueError("refinement must be >= 0")

    shell, faces = _icosphere(refinement)
    nv = shell.shape[0]
    layers = 2 ** refinement

    nodes = np.empty((1 + layers * nv, 3))
    nodes[0] = 0.0
    for layer in range(1, layers + 1):
        r = radius * layer / layers
        nodes[1 + (layer - 1) * nv: 1 + layer * nv] = shell * r

    def lid(layer, v):
        return 1 + (layer - 1) * nv + v

    tets: list[tuple[int, int, int, int]] = []
    for i, j, k in faces:
        tets.append((0, lid(1, i), lid(1, j), lid(1, k)))
    for layer in range(1, layers):
        for i, j, k in faces:
            bot = (lid(layer, i), lid(layer, j), lid(layer, k))
            top = (lid(layer + 1, i), lid(layer + 1, j), lid(layer + 1, k))
            tets.extend(_split_prism(bot, top))
    return _build(nodes, np.array(tets, dtype=np.int64), reorient=True)


def generate_torus_mesh(
    major_radius: float,
    minor_radius: float,
    n_toroidal: int,
    n_poloidal: int,
    n_radial: int,
) -> TetMesh:
    """Structured torus of revolution around the z axis.

    A polar mesh of the circular cross-section is revolved in ``n_toroidal``
    steps; the resulting prisms are split into conforming tets.  Boundary
    nodes satisfy (sqrt(x^2+y^2) - R)^2 + z^2 = r^2 exactly.
    """
    if minor_radius <= 0.0 or major_radius <= minor_radius:
        raise ValueError("torus requires major_radius > minor_radius > 0")
    if n_toroidal < 3 or n_poloidal < 3 or n_radial < 1:
        raise ValueError("torus subdivisions must be >= (3, 3, 1)")

    # Cross-section: polar triangulation of the disc (center + rings).
    pts2d = [(0.0, 0.0)]
    for q in range(1, n_radial + 1):
        rho = minor_radius * q / n_radial
        for p in range(n_poloidal):
            psi = 2.0 * math.pi * p / n_poloidal
            pts2d.append((rho * math.cos(psi), rho * math.sin(psi)))
    n2d = len(pts2d)

    def ring(q, p):
        return 1 + (q - 1) * n_poloidal + p % n_poloidal

    tris2d: list[tuple[int, int, int]] = []
    for p in range(n_poloidal):
        tris2d.append((0, ring(1, p), ring(1, p + 1)))
    for q in range(1, n_radial):
        for p in range(n_poloidal):
            quad = (ring(q, p), ring(q, p + 1), ring(q + 1, p + 1), ring(q + 1, p))
            tris2d.extend(_split_quad(*quad))

    nodes = np.empty((n_toroidal * n2d, 3))
    for t in range(n_toroidal):
        theta = 2.0 * math.pi * t / n_toroidal
        ct, st = math.cos(theta), math.sin(theta)
        for v, (u, z) in enumerate(pts2d):
            radial = major_radius + u
            nodes[t * n2d + v] = (radial * ct, radial * st, z)

    tets: list[tuple[int, int, int, int]] = []
    for t in range(n_toroidal):
        t_next = (t + 1) % n_toroidal
        for i, j, k in tris2d:
            bot = (t * n2d + i, t * n2d + j, t * n2d + k)
            top = (t_next * n2d + i, t_next * n2d + j, t_next * n2d + k)
            tets.extend(_split_prism(bot, top))
    return _build(nodes, np.array(tets, dtype=np.int64), reorient=True)


# ---------------------------------------------------------------------------
# MSH 2.2 ASCII I/O
# ---------------------------------------------------------------------------

def load_msh(path: str | Path) -> TetMesh:
    """Load an MSH 2.2 ASCII mesh containing 4-node tetrahedra.

    Triangle elements (type 2) are skipped since the surface is re-extracted;
    any other element type is rejected.  Node numbering is compacted to
    0-based contiguous indices.
    """
    path = Path(path)
    lines = path.read_text().split("\n")
    pos = 0

    def expect(tag: str):
        nonlocal pos
        while pos < len(lines) and not lines[pos].strip():
            pos += 1
        if pos >= len(lines) or lines[pos].strip() != tag:
            raise MshParseError(f"{path}: expected '{tag}' at line {pos + 1}")
        pos += 1

    expect("$MeshFormat")
    fmt = lines[pos].split()
    pos += 1
    if not fmt or not fmt[0].startswith("2.2"):
        version = fmt[0] if fmt else "<missing>"
        raise MshParseError(f"{path}: unsupported MSH version {version}; only 2.2 ASCII is supported")
    if len(fmt) >= 2 and fmt[1] != "0":
        raise MshParseError(f"{path}: binary MSH files are not supported")
    expect("$EndMeshFormat")

    expect("$Nodes")
    n_nodes = int(lines[pos]); pos += 1
    ids = np.empty(n_nodes, dtype=np.int64)
    coords = np.empty((n_nodes, 3))
    for i in range(n_nodes):
        parts = lines[pos].split(); pos += 1
        ids[i] = int(parts[0])
        coords[i] = [float(parts[1]), float(parts[2]), float(parts[3])]
    expect("$EndNodes")

    remap = {int(node_id): i for i, node_id in enumerate(ids)}
    if len(remap) != n_nodes:
        raise MshParseError(f"{path}: duplicate node ids")

    expect("$Elements")
    n_elems = int(lines[pos]); pos += 1
    tets = []
    for _ in range(n_elems):
        parts = lines[pos].split(); pos += 1
        etype = int(parts[1])
        ntags = int(parts[2])
        conn = parts[3 + ntags:]
        if etype == 4:
            if len(conn) != 4:
                raise MshParseError(f"{path}: tetrahedron with {len(conn)} nodes")
            try:
                tets.append([remap[int(v)] for v in conn])
            except KeyError as exc:
                raise MshParseError(f"{path}: element references unknown node {exc}") from None
        elif etype == 2:
            continue  # surface is re-extracted from the tets
        else:
            raise MshParseError(f"{path}: unsupported element type {etype} (only 4-node tets)")
    expect("$EndElements")

    if not tets:
        raise MshParseError(f"{path}: no tetrahedra found")
    return _build(coords, np.array(tets, dtype=np.int64), reorient=False)


def save_msh(mesh: TetMesh, path: str | Path) -> None:
    """Write a TetMesh as MSH 2.2 ASCII (tetrahedra only)."""
    path = Path(path)
    out = ["$MeshFormat", "2.2 0 8", "$EndMeshFormat", "$Nodes", str(mesh.n_nodes)]
    for i, (x, y, z) in enumerate(mesh.nodes, start=1):
        out.append(f"{i} {x:.17g} {y:.17g} {z:.17g}")
    out += ["$EndNodes", "$Elements", str(mesh.n_tets)]
    for e, tet in enumerate(mesh.tets, start=1):
        v = " ".join(str(int(t) + 1) for t in tet)
        out.append(f"{e} 4 0 {v}")
    out += ["$EndElements", ""]
    path.write_text("\n".join(out))
