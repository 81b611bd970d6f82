"""H-matrix assembly: HCA on admissible leaves, dense near field, matvec
and storage accounting."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..bem import CollocationAssembler
from ..mesh import TetMesh
from .cluster import Block, ClusterTree, build_block_tree, build_cluster_tree, leaf_blocks
from .hca import aca_block, hca_block
from .lowrank import LowRankBlock

__all__ = ["CompressionConfig", "HMatrix", "assemble_h", "compression_ratio"]


@dataclass(frozen=True)
class CompressionConfig:
    """Tunable parameters of the compression engine (all config-overridable)."""

    leaf_size: int = 32
    eta: float = 3.0
    cheb_order: int = 5
    eps: float = 1e-5
    eps_rec: float = 2e-4
    method: str = "hca"          # "hca" | "aca" for admissible blocks


@dataclass(eq=False)
class HMatrix:
    """Blockwise low-rank operator: LowRankBlock payloads on admissible
    leaves, dense payloads (with the diagonal D merged) on the near field."""

    tree: ClusterTree
    n: int
    lowrank: list[tuple[Block, LowRankBlock]] = field(default_factory=list)
    dense: list[tuple[Block, np.ndarray]] = field(default_factory=list)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n,):
            raise ValueError(f"vector must have shape ({self.n},)")
        y = np.zeros(self.n)
        perm = self.tree.perm
        for blk, lr in self.lowrank:
            rows = perm[blk.row.start:blk.row.end]
            cols = perm[blk.col.start:blk.col.end]
            y[rows] += lr.a @ (lr.b.T @ x[cols])
        for blk, mat in self.dense:
            rows = perm[blk.row.start:blk.row.end]
            cols = perm[blk.col.start:blk.col.end]
            y[rows] += mat @ x[cols]
        return y

    def storage_bytes(self) -> int:
        total = sum(lr.storage_bytes() for _, lr in self.lowrank)
        total += sum(mat.size * 8 for _, mat in self.dense)
        return total


def assemble_h(mesh: TetMesh, config: CompressionConfig = CompressionConfig()) -> HMatrix:
    """Build the compressed boundary operator M = K + D as an H-matrix."""
    asm = CollocationAssembler(mesh)
    tree = build_cluster_tree(asm.points(), config.leaf_size)
    root = build_block_tree(tree, tree, config.eta)

    h = HMatrix(tree=tree, n=asm.n)
    for blk in leaf_blocks(root):
        if blk.admissible:
            if config.method == "hca":
                lr = hca_block(asm, tree, blk.row, blk.col,
                               config.cheb_order, config.eps, config.eta)
            else:
                lr = aca_block(asm, tree, blk.row, blk.col, config.eps)
            if not lr.converged:
                rows = tree.indices(blk.row)
                cols = tree.indices(blk.col)
                h.dense.append((blk, asm.block(rows, cols)))
            else:
                h.lowrank.append((blk, lr))
        else:
            rows = tree.indices(blk.row)
            cols = tree.indices(blk.col)
            h.dense.append((blk, asm.block(rows, cols)))
    return h


def compression_ratio(storage_bytes: int, n: int) -> float:
    """r = 1 - size(compressed) / size(dense), with dense = N^2 * 8 bytes."""
    if n < 1:
        raise ValueError("N must be positive")
    return 1.0 - storage_bytes / (float(n) * n * 8.0)
