import numpy as np
import pytest

from strayfield import bem
from strayfield import hmatrix as hm
from strayfield import mesh as meshmod
from strayfield.errors import OperatorIOError


class TestClusterTree:
    def test_single_leaf_when_small(self, rng):
        pts = rng.standard_normal((10, 3))
        tree = hm.build_cluster_tree(pts, leaf_size=16)
        assert tree.root.is_leaf
        assert tree.root.size == 10

    def test_two_separated_clouds(self, rng):
        a = rng.standard_normal((40, 3))
        b = rng.standard_normal((40, 3)) + np.array([100.0, 0.0, 0.0])
        pts = np.vstack([a, b])
        order = rng.permutation(80)
        tree = hm.build_cluster_tree(pts[order], leaf_size=8)
        left, right = tree.root.children
        left_orig = set(order[tree.indices(left)])
        right_orig = set(order[tree.indices(right)])
        # brute-force membership: indices 0..39 are cloud A, 40..79 cloud B
        assert {frozenset(range(40)), frozenset(range(40, 80))} == {
            frozenset(left_orig), frozenset(right_orig)}

    def test_duplicate_points_terminate(self):
        pts = np.zeros((50, 3))
        tree = hm.build_cluster_tree(pts, leaf_size=4)
        sizes = [c.size for c in tree.clusters if c.is_leaf]
        assert max(sizes) <= 4
        assert sum(sizes) == 50

    def test_invariants(self, rng):
        pts = rng.standard_normal((200, 3))
        tree = hm.build_cluster_tree(pts, leaf_size=16)
        assert np.array_equal(np.sort(tree.perm), np.arange(200))
        for c in tree.clusters:
            own = pts[tree.indices(c)]
            assert np.all(own >= c.bbox_min - 1e-12)
            assert np.all(own <= c.bbox_max + 1e-12)
            if c.is_leaf:
                assert c.size <= 16
            else:
                a, b = c.children
                assert (a.start, b.end) == (c.start, c.end)
                assert a.end == b.start

    def test_validation(self):
        with pytest.raises(ValueError):
            hm.build_cluster_tree(np.zeros((0, 3)), 8)
        with pytest.raises(ValueError):
            hm.build_cluster_tree(np.zeros((5, 3)), 0)
        with pytest.raises(ValueError):
            hm.build_cluster_tree(np.zeros((5, 2)), 8)


class TestBlockTree:
    def test_separated_clusters_admissible(self):
        mk = lambda lo: hm.Cluster(0, 1, np.array(lo, float),
                                   np.array(lo, float) + 1.0)
        far = mk([0, 0, 0]), mk([10, 0, 0])
        assert hm.is_admissible(*far, eta=2.0)
        same = mk([0, 0, 0]), mk([0, 0, 0])
        assert not hm.is_admissible(*same, eta=2.0)

    def test_partition_covers_matrix(self, rng):
        pts = rng.standard_normal((100, 3))
        tree = hm.build_cluster_tree(pts, leaf_size=8)
        root = hm.build_block_tree(tree, tree, eta=2.0)
        cover = np.zeros((100, 100), dtype=int)
        for blk in hm.leaf_blocks(root):
            cover[blk.row.start:blk.row.end, blk.col.start:blk.col.end] += 1
        assert np.all(cover == 1)

    def test_matches_reference_enumeration_1d_grid(self):
        # regular 1D grid embedded in 3D: compare against an independent
        # recursive reference that uses interval arithmetic directly
        n, leaf, eta = 64, 8, 1.0
        pts = np.zeros((n, 3))
        pts[:, 0] = np.arange(n, dtype=float)
        tree = hm.build_cluster_tree(pts, leaf_size=leaf)
        root = hm.build_block_tree(tree, tree, eta=eta)
        got = len(hm.leaf_blocks(root))

        def ref_count(a0, a1, b0, b1):
            diam = max(a1 - a0 - 1, b1 - b0 - 1)
            dist = max(0, max(a0, b0) - min(a1, b1) + 1)
            if dist > 0 and diam <= eta * dist:
                return 1
            if a1 - a0 <= leaf and b1 - b0 <= leaf:
                return 1
            am = a0 + (a1 - a0) // 2 if a1 - a0 > leaf else None
            bm = b0 + (b1 - b0) // 2 if b1 - b0 > leaf else None
            aa = [(a0, am), (am, a1)] if am else [(a0, a1)]
            bb = [(b0, bm), (bm, b1)] if bm else [(b0, b1)]
            return sum(ref_count(x0, x1, y0, y1) for x0, x1 in aa for y0, y1 in bb)

        assert got == ref_count(0, n, 0, n)

    def test_eta_validated(self, rng):
        pts = rng.standard_normal((20, 3))
        tree = hm.build_cluster_tree(pts, 8)
        with pytest.raises(ValueError):
            hm.build_block_tree(tree, tree, eta=0.0)


def _aca_on_matrix(mat, epsilon, max_rank=None):
    return hm.aca(lambda i: mat[i], lambda j: mat[:, j],
                  mat.shape[0], mat.shape[1], epsilon, max_rank)


class TestACA:
    def test_exact_rank_one(self, rng):
        mat = np.outer(rng.standard_normal(20), rng.standard_normal(30))
        lr = _aca_on_matrix(mat, 1e-10)
        assert lr.rank == 1
        assert lr.converged
        assert np.abs(lr.dense() - mat).max() <= 1e-12 * np.abs(mat).max()

    def test_zero_block(self):
        lr = _aca_on_matrix(np.zeros((15, 10)), 1e-8)
        assert lr.rank == 0
        assert lr.converged
        assert np.array_equal(lr.dense(), np.zeros((15, 10)))

    def test_hilbert_kernel(self):
        i, j = np.meshgrid(np.arange(100), np.arange(100), indexing="ij")
        mat = 1.0 / (i + j + 1.0)
        lr = _aca_on_matrix(mat, 1e-6)
        err = np.linalg.norm(lr.dense() - mat) / np.linalg.norm(mat)
        assert err <= 1e-5
        assert lr.rank < 20

    def test_max_rank_flag(self, rng):
        mat = rng.standard_normal((40, 40))    # full-rank noise
        lr = _aca_on_matrix(mat, 1e-12, max_rank=5)
        assert lr.rank == 5
        assert not lr.converged

    def test_invalid_epsilon(self):
        with pytest.raises(ValueError):
            _aca_on_matrix(np.ones((3, 3)), 0.0)


class TestACAFull:
    def test_pivots_reproduce_matrix(self, rng):
        u = rng.standard_normal((30, 4))
        v = rng.standard_normal((25, 4))
        mat = u @ v.T
        tau, sigma = hm.aca_full(mat, 1e-10)
        assert tau.size == 4
        cross = mat[np.ix_(tau, sigma)]
        approx = mat[:, sigma] @ np.linalg.solve(cross, mat[tau, :])
        assert np.linalg.norm(approx - mat) <= 1e-8 * np.linalg.norm(mat)

    def test_zero_matrix(self):
        tau, sigma = hm.aca_full(np.zeros((5, 5)), 1e-8)
        assert tau.size == 0


class TestHCA:
    def test_chebyshev_points_in_box(self):
        lo = np.array([0.0, -1.0, 2.0])
        hi = np.array([1.0, 1.0, 2.0])      # degenerate z axis
        pts = hm.chebyshev_points(lo, hi, 3)
        assert pts.shape == (27, 3)
        assert np.all(pts >= lo - 1e-12) and np.all(pts <= hi + 1e-12)
        assert np.allclose(pts[:, 2], 2.0)

    def test_order_one_rank_at_most_one(self, sphere2):
        asm = bem.CollocationAssembler(sphere2)
        tree = hm.build_cluster_tree(asm.points(), 8)
        t, s = _admissible_pair(tree, eta=2.0)
        lr = hm.hca_block(asm, tree, t, s, order=1, epsilon=1e-6, eta=2.0)
        assert lr.rank <= 1

    def test_block_error_vs_dense(self, sphere2):
        asm = bem.CollocationAssembler(sphere2)
        tree = hm.build_cluster_tree(asm.points(), 8)
        t, s = _admissible_pair(tree, eta=1.0)   # well separated
        lr = hm.hca_block(asm, tree, t, s, order=5, epsilon=1e-6, eta=1.0)
        dense = asm.block(tree.indices(t), tree.indices(s))
        err = np.linalg.norm(lr.dense() - dense) / np.linalg.norm(dense)
        assert err <= 1e-4

    def test_inadmissible_pair_rejected(self, sphere2):
        asm = bem.CollocationAssembler(sphere2)
        tree = hm.build_cluster_tree(asm.points(), 32)
        with pytest.raises(ValueError, match="admissible"):
            hm.hca_block(asm, tree, tree.root, tree.root, 4, 1e-6, 2.0)

    def test_invalid_order(self):
        with pytest.raises(ValueError):
            hm.chebyshev_points(np.zeros(3), np.ones(3), 0)


def _admissible_pair(tree, eta):
    best = None
    stack = [(tree.root, tree.root)]
    while stack:
        t, s = stack.pop()
        if hm.is_admissible(t, s, eta) and t.size >= 8 and s.size >= 8:
            return t, s
        for a in t.children or (t,):
            for b in s.children or (s,):
                if (a, b) != (t, s):
                    stack.append((a, b))
    raise AssertionError("no admissible pair found")


@pytest.fixture(scope="module")
def sphere2_operator_pair():
    mesh = meshmod.generate_sphere_mesh(1.0, 2)
    dense = bem.assemble_dense(mesh)
    cfg = hm.CompressionConfig()
    h = hm.assemble_h(mesh, cfg)
    h2 = hm.recompress_h2(h, cfg.eps_rec)
    return mesh, dense, h, h2, cfg


class TestHMatrix:
    def test_matvec_matches_dense(self, sphere2_operator_pair, rng):
        mesh, dense, h, _, cfg = sphere2_operator_pair
        for _ in range(20):
            x = rng.standard_normal(mesh.n_boundary)
            yd = dense.payload @ x
            err = np.linalg.norm(h.matvec(x) - yd) / np.linalg.norm(yd)
            assert err <= 10.0 * cfg.eps

    def test_storage_below_dense(self):
        mesh = meshmod.generate_sphere_mesh(1.0, 3)
        h = hm.assemble_h(mesh)
        assert h.storage_bytes() < mesh.n_boundary ** 2 * 8

    def test_shape_checked(self, sphere2_operator_pair):
        _, _, h, _, _ = sphere2_operator_pair
        with pytest.raises(ValueError):
            h.matvec(np.zeros(3))

    def test_aca_method_also_works(self, rng):
        mesh = meshmod.generate_sphere_mesh(1.0, 2)
        dense = bem.assemble_dense(mesh)
        cfg = hm.CompressionConfig(method="aca")
        h = hm.assemble_h(mesh, cfg)
        x = rng.standard_normal(mesh.n_boundary)
        yd = dense.payload @ x
        assert np.linalg.norm(h.matvec(x) - yd) / np.linalg.norm(yd) <= 10.0 * cfg.eps


class TestH2:
    def test_lossless_at_zero_tolerance(self, sphere2_operator_pair, rng):
        _, _, h, _, _ = sphere2_operator_pair
        h2 = hm.recompress_h2(h, 0.0)
        for _ in range(5):
            x = rng.standard_normal(h.n)
            yh = h.matvec(x)
            err = np.linalg.norm(h2.matvec(x) - yh) / np.linalg.norm(yh)
            assert err <= 1e-12

    def test_close_to_h_at_default_tolerance(self, sphere2_operator_pair, rng):
        _, _, h, h2, _ = sphere2_operator_pair
        for _ in range(10):
            x = rng.standard_normal(h.n)
            yh = h.matvec(x)
            err = np.linalg.norm(h2.matvec(x) - yh) / np.linalg.norm(yh)
            assert err <= 1e-3

    def test_matvec_matches_dense(self, sphere2_operator_pair, rng):
        mesh, dense, _, h2, cfg = sphere2_operator_pair
        for _ in range(20):
            x = rng.standard_normal(mesh.n_boundary)
            yd = dense.payload @ x
            err = np.linalg.norm(h2.matvec(x) - yd) / np.linalg.norm(yd)
            assert err <= 10.0 * cfg.eps

    def test_unit_vector_columns(self, sphere2_operator_pair, rng):
        mesh, dense, _, h2, _ = sphere2_operator_pair
        for j in rng.choice(mesh.n_boundary, 5, replace=False):
            e = np.zeros(mesh.n_boundary)
            e[j] = 1.0
            col = h2.matvec(e)
            ref = dense.payload[:, j]
            assert np.linalg.norm(col - ref) <= 1e-4 * np.linalg.norm(dense.payload)

    def test_zero_and_linearity(self, sphere2_operator_pair, rng):
        _, _, _, h2, _ = sphere2_operator_pair
        assert np.array_equal(h2.matvec(np.zeros(h2.n)), np.zeros(h2.n))
        x, y = rng.standard_normal((2, h2.n))
        lhs = h2.matvec(2.0 * x + 0.5 * y)
        rhs = 2.0 * h2.matvec(x) + 0.5 * h2.matvec(y)
        assert np.linalg.norm(lhs - rhs) <= 1e-12 * np.linalg.norm(lhs)

    def test_nestedness_structural(self, sphere2_operator_pair):
        _, _, _, h2, _ = sphere2_operator_pair
        for c in h2.tree.clusters:
            v = h2.explicit_row_basis(c.cid)
            assert v.shape[0] == c.size
            # orthonormal columns (products of orthonormal maps)
            gram = v.T @ v
            if gram.size:
                assert np.abs(gram - np.eye(gram.shape[0])).max() <= 1e-10
            if not c.is_leaf:
                parts = [h2.explicit_row_basis(ch.cid) @ h2.row_transfer[ch.cid]
                         for ch in c.children]
                assert np.array_equal(np.vstack(parts), v)

    def test_storage_not_larger_than_h(self):
        mesh = meshmod.generate_sphere_mesh(1.0, 3)
        h = hm.assemble_h(mesh)
        h2 = hm.recompress_h2(h, hm.CompressionConfig().eps_rec)
        assert h2.storage_bytes() <= h.storage_bytes()

    def test_monotone_tolerance_ladder(self, rng):
        mesh = meshmod.generate_sphere_mesh(1.0, 2)
        dense = bem.assemble_dense(mesh)
        xs = rng.standard_normal((5, mesh.n_boundary))
        errs = []
        for eps in (1e-3, 5e-4, 2.5e-4):
            cfg = hm.CompressionConfig(eps=eps, eps_rec=eps)
            h2 = hm.recompress_h2(hm.assemble_h(mesh, cfg), eps)
            worst = 0.0
            for x in xs:
                yd = dense.payload @ x
                worst = max(worst, np.linalg.norm(h2.matvec(x) - yd)
                            / np.linalg.norm(yd))
            errs.append(worst)
        assert errs[2] <= errs[1] <= errs[0]


class TestCompressionRatio:
    def test_dense_backend_zero(self, sphere1):
        op = bem.assemble_dense(sphere1)
        assert hm.compression_ratio(op.storage_bytes(), op.n) == 0.0

    def test_hypothetical_arithmetic(self):
        n = int(np.sqrt(100e9 / 8))
        assert hm.compression_ratio(int(1e9), n) == pytest.approx(0.99, abs=1e-3)

    def test_invalid_n(self):
        with pytest.raises(ValueError):
            hm.compression_ratio(100, 0)


class TestPersistence:
    def test_round_trip_bit_exact(self, sphere2_operator_pair, tmp_path, rng):
        mesh, _, _, h2, _ = sphere2_operator_pair
        path = tmp_path / "op.h2m"
        hm.save_h2(h2, path)
        loaded = hm.load_h2(path, expected_n=mesh.n_boundary)
        for _ in range(3):
            x = rng.standard_normal(mesh.n_boundary)
            assert np.array_equal(h2.matvec(x), loaded.matvec(x))
        assert loaded.storage_bytes() == h2.storage_bytes()

    def test_corrupted_byte_detected(self, sphere2_operator_pair, tmp_path):
        _, _, _, h2, _ = sphere2_operator_pair
        path = tmp_path / "op.h2m"
        hm.save_h2(h2, path)
        data = bytearray(path.read_bytes())
        data[len(data) // 2] ^= 0x01
        path.write_bytes(bytes(data))
        with pytest.raises(OperatorIOError, match="checksum"):
            hm.load_h2(path)

    def test_truncated_file(self, sphere2_operator_pair, tmp_path):
        _, _, _, h2, _ = sphere2_operator_pair
        path = tmp_path / "op.h2m"
        hm.save_h2(h2, path)
        path.write_bytes(path.read_bytes()[:50])
        with pytest.raises(OperatorIOError):
            hm.load_h2(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "op.h2m"
        body = b"NOPE" + b"\x00" * 40
        import struct
        path.write_bytes(body + struct.pack("<Q", hm.crc64(body)))
        with pytest.raises(OperatorIOError, match="magic"):
            hm.load_h2(path)

    def test_node_count_mismatch(self, sphere2_operator_pair, tmp_path):
        _, _, _, h2, _ = sphere2_operator_pair
        path = tmp_path / "op.h2m"
        hm.save_h2(h2, path)
        with pytest.raises(OperatorIOError, match="boundary nodes"):
            hm.load_h2(path, expected_n=h2.n + 1)

    def test_crc64_reference_vector(self):
        # CRC-64/XZ check value for the ASCII digits "123456789"
        assert hm.crc64(b"123456789") == 0x995DC9BBDF1939FA
