"""plotkit command line: gallery, bands, curves, qslice."""

import argparse
import os
import sys

from . import render


def build_parser():
    parser = argparse.ArgumentParser(
        prog="plotkit",
        description="Render gpbnn experiment CSVs into figures (offline, file-driven).",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gallery", help="prior-draw panels from draw_id,x,f CSVs")
    p.add_argument("csvs", nargs="+")
    p.add_argument("--out", required=True, help="output image path")

    p = sub.add_parser("bands", help="predictive bands (mean +- 3 std) per model")
    p.add_argument("csvs", nargs="+", help="x,mean,std prediction CSVs")
    p.add_argument("--train", required=True, help="x,y training CSV")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--format", default="png", choices=("png", "svg"))

    p = sub.add_parser("curves", help="learning curves, mean +- 1 standard error")
    p.add_argument("csvs", nargs="+", help="episode,cumulative_reward CSVs")
    p.add_argument("--out", required=True, help="output image path")

    p = sub.add_parser("qslice", help="overlaid Q(theta) slices")
    p.add_argument("csvs", nargs="+", help="theta,q CSVs")
    p.add_argument("--out", required=True, help="output image path")

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "gallery":
            render.plot_prior_gallery(args.csvs, args.out)
        elif args.command == "bands":
            os.makedirs(args.out, exist_ok=True)
            render.plot_predictive_bands(args.csvs, args.train, args.out, fmt=args.format)
        elif args.command == "curves":
            render.plot_learning_curves(args.csvs, args.out)
        elif args.command == "qslice":
            render.plot_q_slice(args.csvs, args.out)
    except (render.PlotDataError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
