"""Acceptance suite: one test per acceptance criterion, each asserting the
pinned tolerance on the scaled-down reference ladders.

The heavy compression ladder runs last; the whole module is designed to
finish in well under fifteen minutes on a desktop machine.
"""

import math

import numpy as np
import pytest
from scipy.integrate import dblquad

from strayfield import analytic, bem, cli, fem, pipeline
from strayfield import hmatrix as hm
from strayfield import mesh as meshmod


def _energy_error(mesh, preset, reference):
    op = bem.assemble_dense(mesh)
    m = pipeline.magnetization_preset(mesh, preset)
    res = pipeline.compute_demag(mesh, m, op)
    return abs(res.e_d_over_kd - reference)


# ---------------------------------------------------------------------------
# energy convergence ladders
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def sphere_ladder_errors():
    return [
        _energy_error(meshmod.generate_sphere_mesh(1.0, r), "uniform-z", 1.0 / 3.0)
        for r in (1, 2, 3, 4)
    ]


def test_sphere_energy_ladder(sphere_ladder_errors):
    # >= 4 refinement levels, finest ~2.4e5 tets
    errs = sphere_ladder_errors
    assert all(b < a for a, b in zip(errs, errs[1:])), f"not monotone: {errs}"
    assert errs[-1] <= 1e-2, f"finest sphere error {errs[-1]:.3e} > 1e-2"


def test_torus_energy_ladder():
    errs = [
        _energy_error(meshmod.generate_torus_mesh(2.0, 1.0, *div), "azimuthal", 0.0)
        for div in ((12, 6, 2), (16, 8, 2), (24, 12, 3), (32, 16, 4))
    ]
    assert all(b < a for a, b in zip(errs, errs[1:])), f"not monotone: {errs}"
    assert errs[-1] <= 1e-3, f"finest torus |e_d|/K_d {errs[-1]:.3e} > 1e-3"


def test_prism_energy_ladder(sphere_ladder_errors):
    ref = analytic.prism_reference(10.0, 20.0, 1.0, axis=2).e_d_over_kd
    # the reference itself is pinned by an independent quadrature oracle
    assert ref == pytest.approx(analytic.demag_factor_quadrature(1.0, 10.0, 20.0),
                                abs=1e-10)
    errs = [
        _energy_error(
            meshmod.generate_prism_mesh(10.0, 20.0, 1.0, 10 * s, 20 * s, s),
            "uniform-z", ref) / ref
        for s in (1, 2, 3)
    ]
    assert all(b < a for a, b in zip(errs, errs[1:])), f"not monotone: {errs}"
    assert errs[-1] <= 5e-2, f"finest prism relative error {errs[-1]:.3e} > 5e-2"
    # visibly slower convergence than the sphere: successive error ratios
    # closer to 1
    prism_rate = np.mean([b / a for a, b in zip(errs, errs[1:])])
    sphere = sphere_ladder_errors[:3]
    sphere_rate = np.mean([b / a for a, b in zip(sphere, sphere[1:])])
    assert prism_rate > sphere_rate, (
        f"prism rate {prism_rate:.3f} not slower than sphere {sphere_rate:.3f}")


# ---------------------------------------------------------------------------
# backend oracle equivalence
# ---------------------------------------------------------------------------

def test_backend_equivalence():
    cfg = hm.CompressionConfig()
    meshes = [
        meshmod.generate_sphere_mesh(1.0, 3),
        meshmod.generate_sphere_mesh(1.0, 4),
        meshmod.generate_prism_mesh(10.0, 20.0, 1.0, 20, 40, 2),
        meshmod.generate_torus_mesh(2.0, 1.0, 32, 16, 4),
    ]
    rng = np.random.default_rng(42)
    for mesh in meshes:
        assert mesh.n_boundary <= 5000
        dense = bem.assemble_dense(mesh)
        h2 = hm.assemble_operator(mesh, "h2", cfg)
        worst = 0.0
        for _ in range(20):
            x = rng.standard_normal(mesh.n_boundary)
            yd = dense.apply(x)
            err = np.linalg.norm(h2.apply(x) - yd) / np.linalg.norm(yd)
            worst = max(worst, err)
        assert worst <= 10.0 * cfg.eps, (
            f"N={mesh.n_boundary}: H2 vs dense error {worst:.3e} > {10 * cfg.eps:.0e}")


# ---------------------------------------------------------------------------
# operator identities
# ---------------------------------------------------------------------------

def test_row_sum_identity():
    # One-time verification of the double-layer row against a fine-quadrature
    # oracle, then the closed-surface row-sum identity at 1e-10.
    mesh = meshmod.generate_prism_mesh(1.0, 1.0, 1.0, 2, 2, 2)
    asm = bem.CollocationAssembler(mesh)
    i = 0
    xi = asm.coords[i]
    tris = asm.tri_cols
    incident = np.any(tris == i, axis=1)
    for t in np.flatnonzero(~incident)[:6]:
        verts = asm.coords[tris[t]]
        p0, p1, p2 = verts
        n = np.cross(p1 - p0, p2 - p0)
        jac = np.linalg.norm(n)
        nhat = n / jac
        for lv in range(3):
            def integrand(v, u, lv=lv):
                lam = (1.0 - u - v, u, v)[lv]
                xp = p0 + u * (p1 - p0) + v * (p2 - p0)
                d = xi - xp
                r = np.linalg.norm(d)
                return lam * np.dot(nhat, d) / (4.0 * math.pi * r ** 3) * jac
            oracle, _ = dblquad(integrand, 0.0, 1.0, 0.0, lambda u: 1.0 - u,
                                epsabs=1e-12, epsrel=1e-12)
            exact = bem.double_layer_triangle(xi, verts, lv)
            assert exact == pytest.approx(oracle, abs=1e-10)

    # the oracle-confirmed kernel makes the operator annihilate constants up
    # to the sign: row sums of K + D equal -1 exactly (equivalently, the
    # double-layer row sums equal -Psi/(4 pi))
    for m in (meshmod.generate_prism_mesh(1.0, 1.0, 1.0, 3, 3, 3),
              meshmod.generate_sphere_mesh(1.0, 2)):
        a = bem.CollocationAssembler(m)
        op = bem.assemble_dense(m)
        k_sums = op.payload.sum(axis=1) - a.diag
        expected = -m.boundary_solid_angles() / (4.0 * math.pi)
        assert np.abs(k_sums - expected).max() <= 1e-10
        assert np.abs(op.payload.sum(axis=1) + 1.0).max() <= 1e-10


def test_solid_angle_suite():
    sphere = meshmod.generate_sphere_mesh(1.0, 2)
    interior = np.setdiff1d(np.arange(sphere.n_nodes), sphere.boundary_nodes)
    angles = sphere.solid_angles[interior]
    assert np.abs(angles / (4.0 * math.pi) - 1.0).max() <= 1e-10

    cube = meshmod.generate_prism_mesh(1.0, 1.0, 1.0, 2, 2, 2)
    for node in cube.boundary_nodes:
        x = cube.nodes[node]
        k = int((np.isclose(x, 0.0) | np.isclose(x, 1.0)).sum())
        expected = {1: 2.0 * math.pi, 2: math.pi, 3: math.pi / 2.0}[k]
        assert meshmod.node_solid_angle(cube, int(node)) == pytest.approx(
            expected, abs=1e-12)


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def test_persistence_round_trip_and_cached_rerun(tmp_path):
    mesh = meshmod.generate_sphere_mesh(1.0, 2)
    op = hm.assemble_operator(mesh, "h2")
    path = tmp_path / "op.h2m"
    hm.save_h2(op.payload, path)
    loaded = hm.load_h2(path, expected_n=mesh.n_boundary)
    rng = np.random.default_rng(3)
    for _ in range(5):
        x = rng.standard_normal(mesh.n_boundary)
        assert np.array_equal(op.payload.matvec(x), loaded.matvec(x))

    cache = tmp_path / "cache"
    outs = []
    for name in ("r1.csv", "r2.csv"):
        out = tmp_path / name
        rc = cli.main(["run", "--geometry", "sphere", "--refine", "2",
                       "--backend", "h2", "--cache-dir", str(cache),
                       "--out", str(out)])
        assert rc == 0
        header, row = out.read_text().strip().split("\n")
        outs.append(dict(zip(header.split(","), row.split(","))))
    assert len(list(cache.glob("*.h2m"))) == 1
    assert outs[0]["e_d_over_kd"] == outs[1]["e_d_over_kd"]


# ---------------------------------------------------------------------------
# FEM suite
# ---------------------------------------------------------------------------

def test_fem_suite():
    meshes = [
        meshmod.generate_prism_mesh(1.0, 1.0, 1.0, 3, 3, 3),
        meshmod.generate_sphere_mesh(1.0, 2),
        meshmod.generate_torus_mesh(2.0, 1.0, 12, 6, 2),
    ]
    for mesh in meshes:
        a = fem.assemble_stiffness(mesh)
        assert np.abs(np.asarray(a.sum(axis=1))).max() <= 1e-11
        assert abs(a - a.T).max() <= 1e-12
        # PSD: quadratic form nonnegative on random vectors
        rng = np.random.default_rng(0)
        for _ in range(10):
            v = rng.standard_normal(mesh.n_nodes)
            assert v @ (a @ v) >= -1e-10 * (v @ v)
        # linear exactness of the Dirichlet solve
        direction = np.array([0.7, -0.2, 0.4])
        g = mesh.boundary_coords() @ direction
        u2, rep = fem.solve_u2(mesh, g, tol=1e-12, stiffness=a)
        assert np.abs(u2 - mesh.nodes @ direction).max() <= 1e-8
        # Neumann compatibility rejection
        from scipy.sparse import csr_matrix
        with pytest.raises(ValueError):
            from strayfield.solver import cg_solve
            cg_solve(a, np.ones(mesh.n_nodes), deflate_constants=True)


# ---------------------------------------------------------------------------
# compression (heavy: runs last)
# ---------------------------------------------------------------------------

def test_compression_ladder():
    cfg = hm.CompressionConfig()
    sizes = []
    h2_storage = []
    final = None
    for s in (2, 3, 5, 7):
        mesh = meshmod.generate_prism_mesh(10.0, 20.0, 1.0, 10 * s, 20 * s, s)
        h = hm.assemble_h(mesh, cfg)
        h2 = hm.recompress_h2(h, cfg.eps_rec)
        sizes.append(mesh.n_boundary)
        h2_storage.append(h2.storage_bytes())
        final = (mesh.n_boundary, h.storage_bytes(), h2.storage_bytes())

    n, sh, s2 = final
    assert n >= 2e4 * 0.9, f"largest ladder point N={n} not near 2e4"
    ratio = hm.compression_ratio(s2, n)
    assert ratio >= 0.95, f"compression ratio {ratio:.4f} < 0.95 at N={n}"
    assert s2 <= sh, f"storage(H2)={s2} exceeds storage(H)={sh}"

    slope = np.polyfit(np.log(sizes), np.log(h2_storage), 1)[0]
    assert 0.9 <= slope <= 1.25, f"H2 storage slope {slope:.3f} outside [0.9, 1.25]"
