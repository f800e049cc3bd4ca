"""Command line wrapper: `bound-heatmap render --surface ... --out figure.png`."""

from __future__ import annotations

import argparse
import sys

from .render import SchemaError, render_heatmap


def build_parser():
    parser = argparse.ArgumentParser(prog="bound-heatmap",
                                     description="figures from bound-surface CSVs")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("render", help="render one surface (plus optional oracle slack panel)")
    p.add_argument("--surface", required=True, help="surface CSV path")
    p.add_argument("--oracle", default=None, help="oracle CSV path for the slack panel")
    p.add_argument("--out", required=True, help="output PNG path")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv if argv is not None else sys.argv[1:])
    try:
        summary = render_heatmap(args.surface, args.out, args.oracle)
    except (SchemaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"rendered {summary.n_tiles} tiles (d={summary.d}, {summary.panels} panel"
          f"{'s' if summary.panels > 1 else ''}) -> {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
