"""Command line front end: one subcommand per figure kind."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .figures import FigureSpec, plot


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="strayfield-plots",
        description="Render report figures from strayfield CSV output.")
    sub = parser.add_subparsers(dest="command", required=True)
    for kind, help_text in (
        ("storage", "operator storage vs boundary nodes (bench CSV)"),
        ("ratio", "compression ratio and H2 scaling (bench CSV)"),
        ("error", "energy error vs element count (run CSV)"),
    ):
        p = sub.add_parser(kind, help=help_text)
        p.add_argument("--in", dest="inputs", action="append", required=True,
                       metavar="CSV", help="input CSV (repeatable)")
        p.add_argument("--out", required=True, metavar="PATH",
                       help="output base path; .svg and .png are written")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    spec = FigureSpec(inputs=tuple(Path(p) for p in args.inputs),
                      kind=args.command, output=Path(args.out))
    try:
        plot(spec)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
