"""Render the three report figures from solver CSV output.

Every figure is rendered twice-identically: the Agg backend, a fixed SVG
hash salt and stripped timestamps make the SVG and PNG outputs byte-stable
across runs on the same installation.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

__all__ = ["FigureSpec", "plot", "plot_storage", "plot_ratio", "plot_error"]

BENCH_COLUMNS = ["geometry", "n_boundary", "backend", "storage_bytes",
                 "compression_ratio", "assembly_s", "hypothetical"]
RUN_COLUMNS = ["geometry", "n_nodes", "n_tets", "n_boundary", "backend",
               "e_d_over_kd", "reference_e_d_over_kd", "abs_error", "rel_error",
               "storage_bytes", "compression_ratio", "u1_iterations",
               "u2_iterations", "wall_time_s"]

_BACKEND_LABELS = {"dense": "dense", "h": "H", "h2": "H²"}
_BACKEND_ORDER = ["dense", "h", "h2"]

_RC = {
    "figure.figsize": (6.0, 4.2),
    "figure.dpi": 120,
    "savefig.dpi": 120,
    "font.family": "DejaVu Sans",
    "font.size": 10,
    "svg.hashsalt": "strayfield-plots",
    "svg.fonttype": "path",
}


@dataclass(frozen=True)
class FigureSpec:
    """One figure request: input CSVs, figure kind and output base path."""

    inputs: tuple[Path, ...]
    kind: str                      # "storage" | "ratio" | "error"
    output: Path                   # extension ignored; .svg and .png written

    def __post_init__(self):
        if self.kind not in ("storage", "ratio", "error"):
            raise ValueError(f"unknown figure kind '{self.kind}'")
        if not self.inputs:
            raise ValueError("at least one input CSV is required")


def _read_rows(path: Path, required: list[str]) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in required if c not in header]
        if missing:
            raise ValueError(
                f"{path}: missing columns {missing}; expected schema {required}")
        rows = list(reader)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    return rows


def _save(fig, output: Path) -> None:
    base = output.with_suffix("")
    base.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(base.with_suffix(".svg"), format="svg", metadata={"Date": None})
    fig.savefig(base.with_suffix(".png"), format="png")
    plt.close(fig)


def _by_backend(rows: list[dict]):
    for backend in _BACKEND_ORDER:
        sel = sorted((r for r in rows if r["backend"] == backend),
                     key=lambda r: int(r["n_boundary"]))
        if sel:
            yield backend, sel


def plot_storage(spec: FigureSpec) -> None:
    """Log-log operator storage versus boundary node count, one series per
    backend (hypothetical dense sizes are drawn dashed)."""
    rows = [r for path in spec.inputs for r in _read_rows(path, BENCH_COLUMNS)]
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        for backend, sel in _by_backend(rows):
            n = [int(r["n_boundary"]) for r in sel]
            size = [float(r["storage_bytes"]) / 2 ** 20 for r in sel]
            hypothetical = any(r["hypothetical"] == "1" for r in sel)
            style = "--" if backend == "dense" and hypothetical else "-"
            ax.loglog(n, size, style, marker="o", label=_BACKEND_LABELS[backend])
        ax.set_xlabel("boundary nodes N")
        ax.set_ylabel("operator storage [MiB]")
        ax.set_title("Operator storage vs boundary nodes")
        ax.grid(True, which="both", alpha=0.3)
        ax.legend()
        _save(fig, spec.output)


def plot_ratio(spec: FigureSpec) -> None:
    """Compression ratio versus N, with the H2 storage growth shown against
    a linear O(N) guide line."""
    rows = [r for path in spec.inputs for r in _read_rows(path, BENCH_COLUMNS)]
    h2 = sorted((r for r in rows if r["backend"] == "h2"),
                key=lambda r: int(r["n_boundary"]))
    if not h2:
        raise ValueError("ratio figure needs h2 backend rows")
    n = [int(r["n_boundary"]) for r in h2]
    ratio = [float(r["compression_ratio"]) for r in h2]
    size = [float(r["storage_bytes"]) / 2 ** 20 for r in h2]
    with plt.rc_context(_RC):
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.0, 4.2))
        ax1.semilogx(n, ratio, "-o", color="tab:blue")
        ax1.set_xlabel("boundary nodes N")
        ax1.set_ylabel("compression ratio r")
        ax1.set_ylim(0.0, 1.0)
        ax1.grid(True, which="both", alpha=0.3)
        ax1.set_title("Compression ratio")

        ax2.loglog(n, size, "-o", color="tab:orange", label="H² storage")
        guide = [size[0] * (x / n[0]) for x in n]
        ax2.loglog(n, guide, ":", color="gray", label="linear O(N)")
        ax2.set_xlabel("boundary nodes N")
        ax2.set_ylabel("storage [MiB]")
        ax2.grid(True, which="both", alpha=0.3)
        ax2.legend()
        ax2.set_title("H² storage scaling")
        fig.tight_layout()
        _save(fig, spec.output)


def plot_error(spec: FigureSpec) -> None:
    """Energy error versus element count, one series per geometry.

    Sphere and prism plot the relative error; the torus reference energy is
    zero, so its series is the absolute error in units of the stray field
    constant.
    """
    rows = [r for path in spec.inputs for r in _read_rows(path, RUN_COLUMNS)]
    series: dict[str, list[dict]] = {}
    for r in rows:
        series.setdefault(r["geometry"], []).append(r)
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        for geometry in sorted(series):
            sel = sorted(series[geometry], key=lambda r: int(r["n_tets"]))
            tets = [int(r["n_tets"]) for r in sel]
            if all(float(r["reference_e_d_over_kd"]) == 0.0 for r in sel):
                err = [float(r["abs_error"]) for r in sel]
                label = f"{geometry} (absolute, units of K_d)"
            else:
                err = [float(r["rel_error"]) for r in sel]
                label = f"{geometry} (relative)"
            ax.semilogy(tets, err, "-o", label=label)
        ax.set_xlabel("elements")
        ax.set_ylabel("energy error")
        ax.set_title("Magnetostatic energy error vs element count")
        ax.grid(True, which="both", alpha=0.3)
        ax.legend()
        _save(fig, spec.output)


_DISPATCH = {"storage": plot_storage, "ratio": plot_ratio, "error": plot_error}


def plot(spec: FigureSpec) -> None:
    _DISPATCH[spec.kind](spec)
