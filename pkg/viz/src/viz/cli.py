"""Command line: viz <run_dir> --kind field|quiver|series|convergence.

Exit codes: 0 on success, 2 on any schema or field error (the image is
not written in that case).
"""

import argparse
import sys

from .errors import VizError
from .render import KINDS, PlotSpec, render

__all__ = ["main"]


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="viz", description="Render one plot from a solver run directory."
    )
    parser.add_argument("run_dir", help="run directory containing manifest.json")
    parser.add_argument("--kind", required=True, choices=KINDS)
    parser.add_argument("--out", required=True, help="output image path (.png or .svg)")
    parser.add_argument("--field", default=None, help="field or column name")
    parser.add_argument(
        "--time", type=float, default=None, help="snapshot time (nearest; default last)"
    )
    parser.add_argument("--vmin", type=float, default=None, help="lower color limit")
    parser.add_argument("--vmax", type=float, default=None, help="upper color limit")
    args = parser.parse_args(argv)
    spec = None
    try:
        spec = PlotSpec(
            run_dir=args.run_dir,
            kind=args.kind,
            out=args.out,
            field=args.field,
            time=args.time,
            vmin=args.vmin,
            vmax=args.vmax,
        )
        render(spec)
    except VizError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
