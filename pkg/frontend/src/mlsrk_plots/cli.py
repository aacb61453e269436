"""Command-line figure rendering from benchmark CSV tables.

Example:
    mlsrk-plots --in results/rates/rates_gbm1d.csv --kind rates \
        --out figures/rates_gbm1d.png

Schema problems and unreadable inputs exit with status 1 and a message
on stderr; no image is written in that case.
"""

from __future__ import annotations

import argparse
import sys

from .figures import KINDS, FigureSpec, SchemaError, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mlsrk-plots",
        description="Render benchmark figures from experiment CSV tables.")
    parser.add_argument("--in", dest="input", required=True,
                        help="input CSV table")
    parser.add_argument("--kind", required=True, choices=KINDS,
                        help="figure layout to use")
    parser.add_argument("--out", required=True, help="output image path")
    parser.add_argument("--group-column", default="scheme",
                        help="column that splits rows into series")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = FigureSpec(input_path=args.input, kind=args.kind,
                          output_path=args.out,
                          group_column=args.group_column)
        summary = render(spec)
    except (SchemaError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {summary.output_path} with {len(summary.series)} series")
    return 0


if __name__ == "__main__":
    sys.exit(main())
