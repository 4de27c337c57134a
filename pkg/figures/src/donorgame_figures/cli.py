"""Command line: render figures from a figure-spec JSON file or a whole
analysis directory.

    donorgame-figures render spec.json [spec2.json ...]
    donorgame-figures defaults analysis_dir [--out figures_dir]
"""

from __future__ import annotations

import argparse
import sys

from .render import render, render_default_figures
from .spec import SpecError, load_spec
from .tables import TableError


def cmd_render(args) -> int:
    for path in args.specs:
        try:
            spec = load_spec(path)
            output = render(spec)
        except (SpecError, TableError, FileNotFoundError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        print(f"figure written: {output}")
        print(f"sidecar written: {spec.sidecar_path}")
    return 0


def cmd_defaults(args) -> int:
    try:
        produced = render_default_figures(args.analysis_dir, args.out)
    except (SpecError, TableError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if not produced:
        print("error: no known tables found to plot", file=sys.stderr)
        return 1
    for path in produced:
        print(f"figure written: {path}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="donorgame-figures", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_render = sub.add_parser("render", help="render figure-spec JSON files")
    p_render.add_argument("specs", nargs="+", help="paths to figure-spec JSON files")
    p_render.set_defaults(func=cmd_render)

    p_defaults = sub.add_parser("defaults", help="render the standard figures for an analysis directory")
    p_defaults.add_argument("analysis_dir")
    p_defaults.add_argument("--out", default=None, help="output directory (default: the analysis directory)")
    p_defaults.set_defaults(func=cmd_defaults)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
