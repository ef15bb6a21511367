"""plotviz command line: render one field or a directory of them."""

from __future__ import annotations

import argparse
import sys

from .reader import FieldGridError
from .render import batch, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plotviz", description="Render FieldGrid v1 files as heatmaps.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("render", help="render one field file to an image")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--cmap", default="viridis")
    p.add_argument("--clip", nargs=2, type=float, metavar=("LO", "HI"),
                   default=None, help="fix the color scale")
    p.add_argument("--overlay", default=None,
                   help="second field drawn as contour lines")

    b = sub.add_parser("batch", help="render every .fgrid in a directory")
    b.add_argument("directory")
    b.add_argument("--cmap", default="viridis")
    b.add_argument("--shared-scale", action="store_true",
                   help="one color scale across all files")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "render":
        try:
            render(args.input, args.output, cmap=args.cmap, clip=args.clip,
                   overlay=args.overlay)
        except FieldGridError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        except OSError as exc:
            print(f"i/o error: {exc}", file=sys.stderr)
            return 1
        print(f"wrote {args.output}")
        return 0
    rendered, failures = batch(args.directory, cmap=args.cmap,
                               shared_scale=args.shared_scale)
    print(f"rendered {len(rendered)} image(s)")
    for path, message in failures:
        print(f"failed: {path}: {message}", file=sys.stderr)
    return 0 if not failures else 1


if __name__ == "__main__":
    sys.exit(main())
