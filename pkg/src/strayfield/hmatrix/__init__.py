"""Hierarchical-matrix compression of the boundary operator: cluster/block
trees, ACA and HCA low-rank blocks, H -> H² recompression, fast matvec and
binary persistence."""

from __future__ import annotations

import math

from ..bem import BoundaryOperator
from ..mesh import TetMesh
from .cluster import (Block, Cluster, ClusterTree, box_distance, build_block_tree,
                      build_cluster_tree, is_admissible, leaf_blocks)
from .h2 import H2Matrix, h2_matvec, recompress_h2
from .hca import aca_block, chebyshev_points, hca_block
from .hmat import CompressionConfig, HMatrix, assemble_h, compression_ratio
from .lowrank import LowRankBlock, aca, aca_full, truncate_lowrank
from .persist import crc64, load_h2, save_h2

__all__ = [
    "Cluster", "ClusterTree", "Block", "build_cluster_tree", "build_block_tree",
    "box_distance", "is_admissible", "leaf_blocks",
    "LowRankBlock", "aca", "aca_full", "truncate_lowrank",
    "chebyshev_points", "hca_block", "aca_block",
    "CompressionConfig", "HMatrix", "assemble_h", "compression_ratio",
    "H2Matrix", "recompress_h2", "h2_matvec",
    "save_h2", "load_h2", "crc64",
    "assemble_operator",
]


def assemble_operator(
    mesh: TetMesh,
    backend: str = "h2",
    config: CompressionConfig = CompressionConfig(),
) -> BoundaryOperator:
    """Build the boundary operator with a compressed backend ("h" or "h2")."""
    if backend not in ("h", "h2"):
        raise ValueError(f"unknown compressed backend '{backend}'")
    h = assemble_h(mesh, config)
    payload = h if backend == "h" else recompress_h2(h, config.eps_rec)
    # the diagonal lives inside the near-field blocks; keep a copy for
    # introspection parity with the dense backend
    diag = mesh.boundary_solid_angles() / (4.0 * math.pi) - 1.0
    return BoundaryOperator(backend=backend, n=h.n, diag=diag, payload=payload)
