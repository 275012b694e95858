"""CLI: ``plots render --spec spec.json``.

Exit codes: 0 success, 2 spec or input-data error (message names the
offending field or column), 3 unexpected failure.
"""

from __future__ import annotations

import argparse
import sys

from .render import render
from .spec import PlotSpec, SpecError


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="plots", description="Render figures from forest-lab CSVs.")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("render", help="render one figure from a JSON plot spec")
    p.add_argument("--spec", required=True, metavar="PATH", help="JSON file describing the figure")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        out = render(PlotSpec.from_json(args.spec))
    except SpecError as exc:
        print(f"plots: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - contract maps unexpected failures to exit 3
        print(f"plots: error: {exc}", file=sys.stderr)
        return 3
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
