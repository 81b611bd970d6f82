"""Algebraic H -> H² recompression with nested cluster bases.

Bottom-up construction: for each cluster, the rows of every admissible block
whose row cluster is the cluster itself or one of its ancestors are
agglomerated (weighted by the R factor of the opposite factor's QR, so the
singular values reflect the true block contribution) and a truncated SVD
yields an orthonormal basis.  Non-leaf bases are expressed through transfer
matrices only; the explicit form is rebuilt on demand.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cluster import Cluster, ClusterTree
from .hmat import HMatrix

__all__ = ["H2Matrix", "recompress_h2", "h2_matvec"]


@dataclass(eq=False)
class H2Matrix:
    """Nested-basis operator.

    Per-cluster data is indexed by the preorder cluster id: leaves store an
    explicit basis (``row_basis``/``col_basis``), non-leaves only the
    transfer matrices of their two children (``row_transfer``/``col_transfer``
    keyed by the child id, mapping the child basis into the parent basis).
    Admissible blocks carry a small coupling matrix; the near field stays
    dense.  Both sides share one cluster tree.
    """

    tree: ClusterTree
    n: int
    row_basis: dict[int, np.ndarray] = field(default_factory=dict)
    row_transfer: dict[int, np.ndarray] = field(default_factory=dict)
    col_basis: dict[int, np.ndarray] = field(default_factory=dict)
    col_transfer: dict[int, np.ndarray] = field(default_factory=dict)
    coupling: list[tuple[int, int, np.ndarray]] = field(default_factory=list)
    near: list[tuple[int, int, np.ndarray]] = field(default_factory=list)

    def row_rank(self, cid: int) -> int:
        c = self.tree.clusters[cid]
        if c.is_leaf:
            return self.row_basis[cid].shape[1]
        return self.row_transfer[c.children[0].cid].shape[1]

    def col_rank(self, cid: int) -> int:
        c = self.tree.clusters[cid]
        if c.is_leaf:
            return self.col_basis[cid].shape[1]
        return self.col_transfer[c.children[0].cid].shape[1]

    def explicit_row_basis(self, cid: int) -> np.ndarray:
        """Rebuild the (|t| x k_t) basis of any cluster from leaf bases and
        transfer matrices (the nestedness contract)."""
        c = self.tree.clusters[cid]
        if c.is_leaf:
            return self.row_basis[cid]
        parts = [self.explicit_row_basis(ch.cid) @ self.row_transfer[ch.cid]
                 for ch in c.children]
        return np.vstack(parts)

    def explicit_col_basis(self, cid: int) -> np.ndarray:
        c = self.tree.clusters[cid]
        if c.is_leaf:
            return self.col_basis[cid]
        parts = [self.explicit_col_basis(ch.cid) @ self.col_transfer[ch.cid]
                 for ch in c.children]
        return np.vstack(parts)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return h2_matvec(self, x)

    def storage_bytes(self) -> int:
        total = 0
        for d in (self.row_basis, self.row_transfer, self.col_basis, self.col_transfer):
            total += sum(m.size for m in d.values())
        total += sum(s.size for _, _, s in self.coupling)
        total += sum(m.size for _, _, m in self.near)
        return total * 8


def _basis_side(
    tree: ClusterTree,
    blocks_by_cluster: dict[int, list[tuple[np.ndarray, np.ndarray]]],
    epsilon: float,
) -> tuple[dict[int, np.ndarray], dict[int, np.ndarray], dict[int, np.ndarray]]:
    """One side (rows or columns) of the nested-basis construction.

    ``blocks_by_cluster[cid]`` lists (factor, weight) pairs for the blocks
    anchored at that cluster: ``factor`` is the |t| x k matrix living on the
    cluster's index range and ``weight`` a k x k matrix (R of the opposite
    factor's QR) making factor @ weight.T spectrally equivalent to the block.
    """
    basis: dict[int, np.ndarray] = {}
    transfer: dict[int, np.ndarray] = {}
    explicit: dict[int, np.ndarray] = {}

    def truncated_basis(z: np.ndarray) -> np.ndarray:
        if z.shape[1] == 0:
            return np.zeros((z.shape[0], 0))
        u, s, _ = np.linalg.svd(z, full_matrices=False)
        if s.size == 0 or s[0] == 0.0:
            return np.zeros((z.shape[0], 0))
        keep = int(np.sum(s > epsilon * s[0]))
        return u[:, :keep]

    def rec(c: Cluster, inherited: list[tuple[np.ndarray, int]]) -> np.ndarray:
        # inherited: (factor @ weight.T, start of its anchor cluster)
        own = [(f @ w.T, c.start) for f, w in blocks_by_cluster.get(c.cid, [])]
        current = inherited + own
        restricted = [m[c.start - s0: c.end - s0] for m, s0 in current]
        if c.is_leaf:
            z = np.hstack(restricted) if restricted else np.zeros((c.size, 0))
            v = truncated_basis(z)
            basis[c.cid] = v
            explicit[c.cid] = v
            return v
        child_v = [rec(ch, current) for ch in c.children]
        if restricted:
            z = np.hstack(restricted)
            off = 0
            proj = []
            for ch, v in zip(c.children, child_v):
                proj.append(v.T @ z[off: off + ch.size])
                off += ch.size
            v_hat = truncated_basis(np.vstack(proj))
        else:
            v_hat = np.zeros((sum(v.shape[1] for v in child_v), 0))
        off = 0
        parts = []
        for ch, v in zip(c.children, child_v):
            e = v_hat[off: off + v.shape[1]]
            transfer[ch.cid] = e
            parts.append(v @ e)
            off += v.shape[1]
        v_full = np.vstack(parts)
        explicit[c.cid] = v_full
        return v_full

    rec(tree.root, [])
    return basis, transfer, explicit


def recompress_h2(h: HMatrix, epsilon_rec: float) -> H2Matrix:
    """Convert an H-matrix into nested-basis form.

    Truncation is relative per cluster: singular values sigma_j <=
    epsilon_rec * sigma_1 are dropped; epsilon_rec = 0 keeps everything and
    the conversion is a lossless orthogonal projection.
    """
    if epsilon_rec < 0.0:
        raise ValueError("epsilon_rec must be >= 0")
    tree = h.tree

    row_blocks: dict[int, list[tuple[np.ndarray, np.ndarray]]] = {}
    col_blocks: dict[int, list[tuple[np.ndarray, np.ndarray]]] = {}
    for blk, lr in h.lowrank:
        if lr.rank == 0:
            continue
        _, rb = np.linalg.qr(lr.b)
        _, ra = np.linalg.qr(lr.a)
        row_blocks.setdefault(blk.row.cid, []).append((lr.a, rb))
        col_blocks.setdefault(blk.col.cid, []).append((lr.b, ra))

    row_basis, row_transfer, row_explicit = _basis_side(tree, row_blocks, epsilon_rec)
    col_basis, col_transfer, col_explicit = _basis_side(tree, col_blocks, epsilon_rec)

    out = H2Matrix(tree=tree, n=h.n,
                   row_basis=row_basis, row_transfer=row_transfer,
                   col_basis=col_basis, col_transfer=col_transfer)

    for blk, lr in h.lowrank:
        vt = row_explicit[blk.row.cid]
        ws = col_explicit[blk.col.cid]
        s_b = (vt.T @ lr.a) @ (lr.b.T @ ws)
        out.coupling.append((blk.row.cid, blk.col.cid, s_b))
    for blk, mat in h.dense:
        out.near.append((blk.row.cid, blk.col.cid, mat.copy()))
    return out


def h2_matvec(op: H2Matrix, x: np.ndarray) -> np.ndarray:
    """Forward transform, coupling products, backward transform, near field."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (op.n,):
        raise ValueError(f"vector must have shape ({op.n},)")
    tree = op.tree
    perm = tree.perm
    xp = x[perm]

    # forward: column-side coefficients x_hat_s = W_s^T x|_s, leaves to root
    x_hat: dict[int, np.ndarray] = {}

    def forward(c: Cluster) -> np.ndarray:
        if c.is_leaf:
            coeff = op.col_basis[c.cid].T @ xp[c.start:c.end]
        else:
            parts = [op.col_transfer[ch.cid].T @ forward(ch) for ch in c.children]
            coeff = parts[0]
            for p in parts[1:]:
                coeff = coeff + p
        x_hat[c.cid] = coeff
        return coeff

    forward(tree.root)

    # coupling: y_hat_t accumulates S_b x_hat_s
    y_hat: dict[int, np.ndarray] = {}
    for rcid, ccid, s_b in op.coupling:
        contrib = s_b @ x_hat[ccid]
        if rcid in y_hat:
            y_hat[rcid] = y_hat[rcid] + contrib
        else:
            y_hat[rcid] = contrib

    # backward: push coefficients down to the leaves
    yp = np.zeros(op.n)

    def backward(c: Cluster, coeff: np.ndarray | None):
        own = y_hat.get(c.cid)
        if own is not None:
            coeff = own if coeff is None else coeff + own
        if c.is_leaf:
            if coeff is not None:
                yp[c.start:c.end] += op.row_basis[c.cid] @ coeff
            return
        for ch in c.children:
            down = None if coeff is None else op.row_transfer[ch.cid] @ coeff
            backward(ch, down)

    backward(tree.root, None)

    for rcid, ccid, mat in op.near:
        rc = tree.clusters[rcid]
        cc = tree.clusters[ccid]
        yp[rc.start:rc.end] += mat @ xp[cc.start:cc.end]

    y = np.zeros(op.n)
    y[perm] = yp
    return y
