"""Command-line front end: run the full pipeline, benchmark operator
storage, inspect meshes, and manage the operator cache.

All numeric CSV fields are written with 17 significant digits so that
re-runs of identical configurations are comparable to the bit (the wall-time
columns are the only intentional exception).
"""

from __future__ import annotations

import argparse
import hashlib
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import bem, hmatrix, pipeline
from . import mesh as meshmod
from .errors import OperatorIOError

__all__ = ["main", "RUN_COLUMNS", "BENCH_COLUMNS"]

RUN_COLUMNS = [
    "geometry", "n_nodes", "n_tets", "n_boundary", "backend",
    "e_d_over_kd", "reference_e_d_over_kd", "abs_error", "rel_error",
    "storage_bytes", "compression_ratio", "u1_iterations", "u2_iterations",
    "wall_time_s",
]

BENCH_COLUMNS = [
    "geometry", "n_boundary", "backend", "storage_bytes",
    "compression_ratio", "assembly_s", "hypothetical",
]


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def _emit_csv(path: str | None, columns: list[str], rows: list[dict]) -> None:
    lines = []
    new_file = path is None or not Path(path).exists() or Path(path).stat().st_size == 0
    if new_file:
        lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(_fmt(row[c]) for c in columns))
    text = "\n".join(lines) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "a", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _parse_triple(text: str, kind, name: str):
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"{name} expects three comma-separated values")
    return tuple(kind(p) for p in parts)


def _add_geometry_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--geometry", required=True,
                   help="sphere | prism | torus | path to a .msh file")
    p.add_argument("--refine", type=int, default=2,
                   help="sphere surface refinement level (default 2)")
    p.add_argument("--radius", type=float, default=1.0, help="sphere radius")
    p.add_argument("--dims", default="10,20,1",
                   help="prism edge lengths a,b,c (default 10,20,1)")
    p.add_argument("--divisions", default=None,
                   help="prism nx,ny,nz or torus n_toroidal,n_poloidal,n_radial")
    p.add_argument("--radii", default="2,1",
                   help="torus major,minor radius (default 2,1)")


def _add_compression_args(p: argparse.ArgumentParser) -> None:
    defaults = hmatrix.CompressionConfig()
    p.add_argument("--leaf-size", type=int, default=defaults.leaf_size)
    p.add_argument("--eta", type=float, default=defaults.eta)
    p.add_argument("--cheb-order", type=int, default=defaults.cheb_order)
    p.add_argument("--eps", type=float, default=defaults.eps)
    p.add_argument("--eps-rec", type=float, default=defaults.eps_rec)


def build_mesh(args) -> tuple[meshmod.TetMesh, str]:
    """Construct the mesh named by the geometry arguments."""
    geom = args.geometry
    if geom == "sphere":
        return meshmod.generate_sphere_mesh(args.radius, args.refine), "sphere"
    if geom == "prism":
        a, b, c = _parse_triple(args.dims, float, "--dims")
        div = args.divisions or "20,40,2"
        nx, ny, nz = _parse_triple(div, int, "--divisions")
        return meshmod.generate_prism_mesh(a, b, c, nx, ny, nz), "prism"
    if geom == "torus":
        big, small = (float(p) for p in args.radii.split(","))
        div = args.divisions or "24,12,3"
        nt, npol, nr = _parse_triple(div, int, "--divisions")
        return meshmod.generate_torus_mesh(big, small, nt, npol, nr), "torus"
    if geom.endswith(".msh"):
        return meshmod.load_msh(geom), Path(geom).stem
    raise ValueError(f"unknown geometry '{geom}'")


def compression_config(args) -> hmatrix.CompressionConfig:
    return hmatrix.CompressionConfig(
        leaf_size=args.leaf_size, eta=args.eta, cheb_order=args.cheb_order,
        eps=args.eps, eps_rec=args.eps_rec,
    )


def _cache_key(mesh: meshmod.TetMesh, cfg: hmatrix.CompressionConfig) -> str:
    """Content hash of the mesh bytes and the compression parameters."""
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(mesh.nodes, "<f8").tobytes())
    h.update(np.ascontiguousarray(mesh.tets, "<i8").tobytes())
    h.update(
        f"{cfg.leaf_size}|{cfg.eta!r}|{cfg.cheb_order}|{cfg.eps!r}|{cfg.eps_rec!r}"
        .encode()
    )
    return h.hexdigest()


def _atomic_save(op: hmatrix.H2Matrix, path: Path) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    os.close(fd)
    try:
        hmatrix.save_h2(op, tmp)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def obtain_operator(
    mesh: meshmod.TetMesh,
    backend: str,
    cfg: hmatrix.CompressionConfig,
    cache_dir: str | None,
) -> bem.BoundaryOperator:
    """Assemble (or load from cache) the boundary operator."""
    if backend == "dense":
        return bem.assemble_dense(mesh)
    if backend == "h":
        return hmatrix.assemble_operator(mesh, "h", cfg)
    if backend != "h2":
        raise ValueError(f"unknown backend '{backend}'")

    if cache_dir is None:
        return hmatrix.assemble_operator(mesh, "h2", cfg)

    cache = Path(cache_dir)
    cache.mkdir(parents=True, exist_ok=True)
    path = cache / f"{_cache_key(mesh, cfg)}.h2m"
    if path.exists():
        try:
            payload = hmatrix.load_h2(path, expected_n=mesh.n_boundary)
            diag = mesh.boundary_solid_angles() / (4.0 * np.pi) - 1.0
            return bem.BoundaryOperator(backend="h2", n=mesh.n_boundary,
                                        diag=diag, payload=payload)
        except OperatorIOError as exc:
            print(f"warning: cache file unusable ({exc}); rebuilding", file=sys.stderr)
    else:
        print(f"notice: operator cache miss; building {path.name}", file=sys.stderr)
    op = hmatrix.assemble_operator(mesh, "h2", cfg)
    _atomic_save(op.payload, path)
    return op


def cmd_run(args) -> int:
    t0 = time.perf_counter()
    mesh, label = build_mesh(args)
    cfg = compression_config(args)
    op = obtain_operator(mesh, args.backend, cfg, args.cache_dir)
    m_nodal = pipeline.magnetization_preset(mesh, args.preset)
    result = pipeline.compute_demag(mesh, m_nodal, op, tol=args.tol)
    wall = time.perf_counter() - t0

    dims = None
    if label == "prism":
        dims = _parse_triple(args.dims, float, "--dims")
    ref = pipeline.reference_for(label, args.preset, dims)
    if ref is not None:
        ref_val = ref.e_d_over_kd
        abs_err = abs(result.e_d_over_kd - ref_val)
        rel_err = abs_err / abs(ref_val) if ref_val != 0.0 else float("nan")
    else:
        ref_val = float("nan")
        abs_err = float("nan")
        rel_err = float("nan")

    storage = op.storage_bytes()
    row = {
        "geometry": label,
        "n_nodes": mesh.n_nodes,
        "n_tets": mesh.n_tets,
        "n_boundary": mesh.n_boundary,
        "backend": args.backend,
        "e_d_over_kd": result.e_d_over_kd,
        "reference_e_d_over_kd": ref_val,
        "abs_error": abs_err,
        "rel_error": rel_err,
        "storage_bytes": storage,
        "compression_ratio": hmatrix.compression_ratio(storage, mesh.n_boundary),
        "u1_iterations": result.u1_iterations,
        "u2_iterations": result.u2_iterations,
        "wall_time_s": wall,
    }
    _emit_csv(args.out, RUN_COLUMNS, [row])
    return 0


def cmd_bench(args) -> int:
    backends = args.backends.split(",")
    ladder = [int(s) for s in args.ladder.split(",")]
    if len(ladder) < 4:
        raise ValueError("bench needs a ladder of at least 4 refinements")
    cfg = compression_config(args)
    rows = []
    for step in ladder:
        mesh, label = _bench_mesh(args, step)
        n = mesh.n_boundary
        for backend in backends:
            hypothetical = 0
            if backend == "dense":
                if n > bem.DENSE_CAP:
                    storage = n * n * 8
                    elapsed = float("nan")
                    hypothetical = 1
                else:
                    t0 = time.perf_counter()
                    storage = bem.assemble_dense(mesh).storage_bytes()
                    elapsed = time.perf_counter() - t0
            else:
                t0 = time.perf_counter()
                storage = hmatrix.assemble_operator(mesh, backend, cfg).storage_bytes()
                elapsed = time.perf_counter() - t0
            rows.append({
                "geometry": label, "n_boundary": n, "backend": backend,
                "storage_bytes": storage,
                "compression_ratio": hmatrix.compression_ratio(storage, n),
                "assembly_s": elapsed, "hypothetical": hypothetical,
            })
    _emit_csv(args.out, BENCH_COLUMNS, rows)
    return 0


def _bench_mesh(args, step: int) -> tuple[meshmod.TetMesh, str]:
    """One rung of the benchmark ladder; the step scales the division counts."""
    if args.geometry == "sphere":
        return meshmod.generate_sphere_mesh(args.radius, step), "sphere"
    if args.geometry == "prism":
        a, b, c = _parse_triple(args.dims, float, "--dims")
        return meshmod.generate_prism_mesh(a, b, c, 10 * step, 20 * step, step), "prism"
    if args.geometry == "torus":
        big, small = (float(p) for p in args.radii.split(","))
        return meshmod.generate_torus_mesh(big, small, 8 * step, 4 * step, step), "torus"
    raise ValueError("bench supports sphere, prism and torus geometries")


def cmd_mesh_info(args) -> int:
    mesh, label = build_mesh(args)
    vols = meshmod.tet_volumes(mesh.nodes, mesh.tets)
    print(f"geometry={label}")
    print(f"n_nodes={mesh.n_nodes}")
    print(f"n_tets={mesh.n_tets}")
    print(f"n_boundary={mesh.n_boundary}")
    print(f"n_triangles={mesh.surface.triangles.shape[0]}")
    print(f"volume={vols.sum():.17g}")
    print(f"surface_area={mesh.surface.areas.sum():.17g}")
    return 0


def cmd_cache(args) -> int:
    mesh, _ = build_mesh(args)
    cfg = compression_config(args)
    cache = Path(args.cache_dir)
    cache.mkdir(parents=True, exist_ok=True)
    path = cache / f"{_cache_key(mesh, cfg)}.h2m"
    op = hmatrix.assemble_operator(mesh, "h2", cfg)
    _atomic_save(op.payload, path)
    print(path)
    return 0


def _apply_config_file(argv: list[str]) -> list[str]:
    """Expand ``--config FILE`` into leading flags so that explicit flags
    override the file's key=value lines."""
    if "--config" not in argv:
        return argv
    i = argv.index("--config")
    if i + 1 >= len(argv):
        raise ValueError("--config requires a file path")
    path = argv[i + 1]
    rest = argv[:i] + argv[i + 2:]
    injected: list[str] = []
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"bad config line: {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        injected += [f"--{key.replace('_', '-')}", value]
    # subcommand first, then file values, then explicit flags (which win)
    return rest[:1] + injected + rest[1:]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="strayfield",
        description="Open-boundary magnetostatic field solver (FEM/BEM with "
                    "hierarchical-matrix compression)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the pipeline and emit one CSV row")
    _add_geometry_args(p_run)
    _add_compression_args(p_run)
    p_run.add_argument("--preset", default="uniform-z",
                       help="uniform-x|uniform-y|uniform-z|azimuthal")
    p_run.add_argument("--backend", default="h2", choices=["dense", "h", "h2"])
    p_run.add_argument("--tol", type=float, default=1e-10, help="solver tolerance")
    p_run.add_argument("--out", default=None, help="CSV path (appends; default stdout)")
    p_run.add_argument("--cache-dir", default=None, help="operator cache directory")
    p_run.set_defaults(func=cmd_run)

    p_bench = sub.add_parser("bench", help="storage/ratio benchmark over a ladder")
    _add_geometry_args(p_bench)
    _add_compression_args(p_bench)
    p_bench.add_argument("--ladder", required=True,
                         help="comma-separated refinement steps (at least 4)")
    p_bench.add_argument("--backends", default="dense,h,h2")
    p_bench.add_argument("--out", default=None)
    p_bench.set_defaults(func=cmd_bench)

    p_info = sub.add_parser("mesh-info", help="print mesh statistics")
    _add_geometry_args(p_info)
    p_info.set_defaults(func=cmd_mesh_info)

    p_cache = sub.add_parser("cache", help="build and store an H2 operator")
    _add_geometry_args(p_cache)
    _add_compression_args(p_cache)
    p_cache.add_argument("--cache-dir", required=True)
    p_cache.set_defaults(func=cmd_cache)

    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        argv = _apply_config_file(argv)
        args = build_parser().parse_args(argv)
        return args.func(args)
    except BrokenPipeError:
        return 1
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
