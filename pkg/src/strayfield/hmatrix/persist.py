"""Binary persistence of H² operators.

Little-endian layout: magic "H2MS", u32 version, u64 N, the permutation,
the preorder-serialized cluster tree, per-cluster basis/transfer payloads
for both sides, the block list (admissible couplings and dense near-field
blocks), and a trailing CRC-64 of everything before it.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import OperatorIOError
from .cluster import Cluster, ClusterTree
from .h2 import H2Matrix

__all__ = ["save_h2", "load_h2", "crc64"]

MAGIC = b"H2MS"
VERSION = 1

# CRC-64/XZ: reflected polynomial 0xC96C5795D7870F42, init/xorout all-ones.
_CRC_POLY = 0xC96C5795D7870F42
_CRC_TABLE: list[int] = []
for _byte in range(256):
    _c = _byte
    for _ in range(8):
        _c = (_c >> 1) ^ _CRC_POLY if _c & 1 else _c >> 1
    _CRC_TABLE.append(_c)


def crc64(data: bytes) -> int:
    crc = 0xFFFFFFFFFFFFFFFF
    for b in data:
        crc = _CRC_TABLE[(crc ^ b) & 0xFF] ^ (crc >> 8)
    return crc ^ 0xFFFFFFFFFFFFFFFF


def _pack_matrix(m: np.ndarray) -> bytes:
    m = np.ascontiguousarray(m, dtype="<f8")
    return struct.pack("<QQ", m.shape[0], m.shape[1]) + m.tobytes()


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise OperatorIOError("truncated operator file")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    def matrix(self) -> np.ndarray:
        r, c = struct.unpack("<QQ", self.take(16))
        if r * c > len(self.data):
            raise OperatorIOError("corrupt matrix header in operator file")
        flat = np.frombuffer(self.take(r * c * 8), dtype="<f8")
        return flat.reshape(r, c).astype(np.float64)


def _serialize_tree(tree: ClusterTree) -> bytes:
    parts = [struct.pack("<Q", len(tree.clusters))]
    for c in tree.clusters:                       # preorder by construction
        parts.append(struct.pack("<QQ", c.start, c.end))
        parts.append(np.asarray(c.bbox_min, "<f8").tobytes())
        parts.append(np.asarray(c.bbox_max, "<f8").tobytes())
        parts.append(struct.pack("<B", 1 if c.is_leaf else 0))
    return b"".join(parts)


def _deserialize_tree(rd: _Reader, n: int) -> ClusterTree:
    count = rd.u64()
    clusters: list[Cluster] = []

    def rec() -> Cluster:
        start, end = struct.unpack("<QQ", rd.take(16))
        lo = np.frombuffer(rd.take(24), "<f8").astype(np.float64)
        hi = np.frombuffer(rd.take(24), "<f8").astype(np.float64)
        leaf = rd.u8()
        c = Cluster(start, end, lo, hi)
        c.cid = len(clusters)
        clusters.append(c)
        if not leaf:
            left = rec()
            right = rec()
            c.children = (left, right)
        return c

    root = rec()
    if len(clusters) != count or root.start != 0 or root.end != n:
        raise OperatorIOError("inconsistent cluster tree in operator file")
    return ClusterTree(root=root, perm=np.empty(0, np.int64), clusters=clusters)


def _serialize_side(op: H2Matrix, basis: dict, transfer: dict) -> bytes:
    parts = []
    for c in op.tree.clusters:
        if c.is_leaf:
            parts.append(_pack_matrix(basis[c.cid]))
        else:
            for ch in c.children:
                parts.append(_pack_matrix(transfer[ch.cid]))
    return b"".join(parts)


def _deserialize_side(rd: _Reader, tree: ClusterTree) -> tuple[dict, dict]:
    basis: dict[int, np.ndarray] = {}
    transfer: dict[int, np.ndarray] = {}
    for c in tree.clusters:
        if c.is_leaf:
            basis[c.cid] = rd.matrix()
        else:
            for ch in c.children:
                transfer[ch.cid] = rd.matrix()
    return basis, transfer


def save_h2(op: H2Matrix, path: str | Path) -> None:
    """Serialize an H² operator; the trailing checksum covers every
    preceding byte."""
    parts = [MAGIC, struct.pack("<I", VERSION), struct.pack("<Q", op.n)]
    parts.append(np.asarray(op.tree.perm, "<u8").tobytes())
    parts.append(_serialize_tree(op.tree))
    parts.append(_serialize_side(op, op.row_basis, op.row_transfer))
    parts.append(_serialize_side(op, op.col_basis, op.col_transfer))

    parts.append(struct.pack("<Q", len(op.coupling)))
    for rcid, ccid, s_b in op.coupling:
        parts.append(struct.pack("<QQB", rcid, ccid, 1))
        parts.append(_pack_matrix(s_b))
    parts.append(struct.pack("<Q", len(op.near)))
    for rcid, ccid, mat in op.near:
        parts.append(struct.pack("<QQB", rcid, ccid, 0))
        parts.append(_pack_matrix(mat))

    body = b"".join(parts)
    Path(path).write_bytes(body + struct.pack("<Q", crc64(body)))


def load_h2(path: str | Path, expected_n: int | None = None) -> H2Matrix:
    """Read an operator back; raises OperatorIOError on a bad magic number,
    unsupported version, truncation, checksum mismatch, or when the stored
    node count disagrees with ``expected_n``."""
    data = Path(path).read_bytes()
    if len(data) < 24:
        raise OperatorIOError("truncated operator file")
    body, (stored,) = data[:-8], struct.unpack("<Q", data[-8:])
    if crc64(body) != stored:
        raise OperatorIOError("operator file checksum mismatch")

    rd = _Reader(body)
    if rd.take(4) != MAGIC:
        raise OperatorIOError("bad magic number in operator file")
    version = rd.u32()
    if version != VERSION:
        raise OperatorIOError(f"unsupported operator file version {version}")
    n = rd.u64()
    if expected_n is not None and n != expected_n:
        raise OperatorIOError(
            f"operator file holds {n} boundary nodes, mesh has {expected_n}"
        )
    perm = np.frombuffer(rd.take(n * 8), "<u8").astype(np.int64)

    tree = _deserialize_tree(rd, n)
    tree.perm = perm
    op = H2Matrix(tree=tree, n=n)
    op.row_basis, op.row_transfer = _deserialize_side(rd, tree)
    op.col_basis, op.col_transfer = _deserialize_side(rd, tree)

    n_coup = rd.u64()
    for _ in range(n_coup):
        rcid, ccid, flag = struct.unpack("<QQB", rd.take(17))
        if flag != 1:
            raise OperatorIOError("coupling block with wrong admissibility flag")
        op.coupling.append((rcid, ccid, rd.matrix()))
    n_near = rd.u64()
    for _ in range(n_near):
        rcid, ccid, flag = struct.unpack("<QQB", rd.take(17))
        if flag != 0:
            raise OperatorIOError("near-field block with wrong admissibility flag")
        op.near.append((rcid, ccid, rd.matrix()))
    if rd.pos != len(body):
        raise OperatorIOError("trailing garbage in operator file")
    return op
