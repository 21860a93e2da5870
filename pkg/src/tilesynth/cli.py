"""Batch front end: program + catalog in, reports out.

Exit codes: 0 success, 1 diagnostics or synthesis failure, 2 usage error
(bad flags, unreadable files).  All behavior is controlled by flags; no
environment variables are consulted.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

from .catalog import builtin_catalog_path, load_catalog
from .errors import CatalogFormatError, ParseError, UnknownOp
from .ir import parse_program
from .pipeline import synthesize_program
from .report import build_report, explain_op, render_json, render_text
from .synth import SynthesisConfig


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="tilesynth",
        description="Synthesize thread-value and shared-memory layouts for a "
        "tile-level GPU program and rank instruction choices by modeled latency.",
    )
    p.add_argument("--program", required=True, help="program file")
    p.add_argument(
        "--catalog",
        default=None,
        help="instruction catalog file (default: bundled sm80 catalog)",
    )
    p.add_argument("--threads", type=int, default=128, help="threads per tile (default 128)")
    p.add_argument(
        "--max-candidates", type=int, default=64, help="search-tree leaf cap (default 64)"
    )
    p.add_argument("--report", default=None, help="write the report to this path")
    p.add_argument("--format", choices=("json", "text"), default="text")
    p.add_argument(
        "--explain", type=int, default=None, metavar="OP",
        help="print the constraint trace for one operation and exit",
    )
    p.add_argument(
        "--all-candidates", action="store_true",
        help="include every surviving search leaf in the report",
    )
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)

    program_path = Path(args.program)
    catalog_path = Path(args.catalog) if args.catalog else builtin_catalog_path()
    if not program_path.is_file():
        print(f"error: program file not found: {program_path}", file=sys.stderr)
        return 2
    if not catalog_path.is_file():
        print(f"error: catalog file not found: {catalog_path}", file=sys.stderr)
        return 2
    if args.threads < 32 or args.threads % 32:
        print("error: --threads must be a positive multiple of 32", file=sys.stderr)
        return 2

    try:
        catalog = load_catalog(catalog_path)
    except CatalogFormatError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    try:
        graph = parse_program(program_path.read_text())
    except ParseError as e:
        print(f"error: {program_path}: {e}", file=sys.stderr)
        return 1

    config = SynthesisConfig(threads=args.threads, max_candidates=args.max_candidates)
    result = synthesize_program(graph, catalog, config)

    if args.explain is not None:
        if result.diagnostics:
            for d in result.diagnostics:
                print(f"diagnostic: {d}", file=sys.stderr)
            return 1
        try:
            print(explain_op(result, args.explain), end="")
        except UnknownOp as e:
            print(f"error: {e}", file=sys.stderr)
            return 1
        return 0

    report = build_report(result, all_candidates=args.all_candidates)
    rendered = render_json(report) if args.format == "json" else render_text(report)
    if args.report:
        Path(args.report).write_text(rendered)
    else:
        print(rendered, end="")

    if not result.ok:
        for d in result.diagnostics:
            print(f"diagnostic: {d}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
