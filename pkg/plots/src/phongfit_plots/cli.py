"""CLI: render figures from a JSON plot spec."""

from __future__ import annotations

import argparse
import sys

from .render import render
from .spec import MissingColumnError, NoRowsError, PlotSpecError, load_plot_spec


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="phongfit-plots")
    sub = parser.add_subparsers(dest="command", required=True)
    p_render = sub.add_parser("render", help="render one figure from a spec")
    p_render.add_argument("--spec", required=True, help="plot spec JSON file")
    args = parser.parse_args(argv)

    try:
        spec = load_plot_spec(args.spec)
        result = render(spec)
    except (PlotSpecError, MissingColumnError, NoRowsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for path in result.outputs:
        print(path)
    for label in result.skipped:
        print(f"warning: series '{label}' skipped (no rows)", file=sys.stderr)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
