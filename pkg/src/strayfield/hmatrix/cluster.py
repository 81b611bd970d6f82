"""Geometric cluster tree and admissibility-driven block partition."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["Cluster", "ClusterTree", "Block", "build_cluster_tree", "build_block_tree",
           "box_distance"]


@dataclass(eq=False)
class Cluster:
    """Contiguous index range (under the tree's permutation) with its
    axis-aligned bounding box."""

    start: int
    end: int
    bbox_min: np.ndarray
    bbox_max: np.ndarray
    children: tuple["Cluster", ...] = ()
    cid: int = -1  # preorder id, assigned once the tree is complete

    @property
    def size(self) -> int:
        return self.end - self.start

    @property
    def is_leaf(self) -> bool:
        return not self.children

    def diameter(self) -> float:
        return float(np.linalg.norm(self.bbox_max - self.bbox_min))


def box_distance(a: Cluster, b: Cluster) -> float:
    gap = np.maximum(a.bbox_min - b.bbox_max, b.bbox_min - a.bbox_max)
    return float(np.linalg.norm(np.maximum(gap, 0.0)))


@dataclass(eq=False)
class ClusterTree:
    """Binary geometric bisection tree over a point set.

    ``perm[pos]`` maps tree positions back to the original point index, so a
    cluster covers the original indices ``perm[start:end]``.
    """

    root: Cluster
    perm: np.ndarray
    clusters: list[Cluster] = field(default_factory=list)  # preorder

    @property
    def n_points(self) -> int:
        return self.perm.shape[0]

    def indices(self, cluster: Cluster) -> np.ndarray:
        return self.perm[cluster.start:cluster.end]


def build_cluster_tree(points: np.ndarray, leaf_size: int = 32) -> ClusterTree:
    """Recursive median bisection along the longest bounding-box axis.

    Axis ties break toward the lowest axis index; coordinate ties are broken
    by the stable sort, so duplicate points still split evenly.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 3:
        raise ValueError("points must have shape (N, 3)")
    n = points.shape[0]
    if n < 1:
        raise ValueError("cluster tree needs at least one point")
    if leaf_size < 1:
        raise ValueError("leaf_size must be >= 1")

    perm = np.arange(n, dtype=np.int64)

    def rec(start: int, end: int) -> Cluster:
        idx = perm[start:end]
        pts = points[idx]
        lo = pts.min(axis=0)
        hi = pts.max(axis=0)
        if end - start <= leaf_size:
            return Cluster(start, end, lo, hi)
        extent = hi - lo
        axis = int(np.argmax(extent))  # argmax returns the lowest tying axis
        order = np.argsort(pts[:, axis], kind="stable")
        perm[start:end] = idx[order]
        mid = start + (end - start) // 2
        left = rec(start, mid)
        right = rec(mid, end)
        return Cluster(start, end, lo, hi, children=(left, right))

    root = rec(0, n)

    clusters: list[Cluster] = []

    def number(c: Cluster):
        c.cid = len(clusters)
        clusters.append(c)
        for ch in c.children:
            number(ch)

    number(root)
    return ClusterTree(root=root, perm=perm, clusters=clusters)


@dataclass(eq=False)
class Block:
    """Node of the block partition; leaves are admissible (low-rank) or
    dense (both clusters are tree leaves)."""

    row: Cluster
    col: Cluster
    admissible: bool
    children: tuple["Block", ...] = ()

    @property
    def is_leaf(self) -> bool:
        return not self.children


def is_admissible(t: Cluster, s: Cluster, eta: float) -> bool:
    dist = box_distance(t, s)
    return dist > 0.0 and max(t.diameter(), s.diameter()) <= eta * dist


def build_block_tree(rows: ClusterTree, cols: ClusterTree, eta: float = 2.0) -> Block:
    """Recursive partition: admissible blocks stop, inadmissible blocks split
    whichever clusters still have children; leaf x leaf blocks become dense."""
    if eta <= 0.0:
        raise ValueError("eta must be positive")

    def rec(t: Cluster, s: Cluster) -> Block:
        if is_admissible(t, s, eta):
            return Block(t, s, admissible=True)
        if t.is_leaf and s.is_leaf:
            return Block(t, s, admissible=False)
        tc = t.children if not t.is_leaf else (t,)
        sc = s.children if not s.is_leaf else (s,)
        kids = tuple(rec(a, b) for a in tc for b in sc)
        return Block(t, s, admissible=False, children=kids)

    return rec(rows.root, cols.root)


def leaf_blocks(root: Block) -> list[Block]:
    out: list[Block] = []
    stack = [root]
    while stack:
        b = stack.pop()
        if b.is_leaf:
            out.append(b)
        else:
            stack.extend(reversed(b.children))
    return out
