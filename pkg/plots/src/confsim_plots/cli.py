"""Standalone plotting driver: ``confsim-plot <kind> --in ... --out ...``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from confsim_plots.render import KINDS, PlotJob, SchemaError, render


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(prog="confsim-plot", description=__doc__)
    sub = ap.add_subparsers(dest="kind", required=True)

    p = sub.add_parser("fit_overlay", help="data with error bars plus the fitted curve")
    p.add_argument("--catalog", required=True)
    p.add_argument("--curve", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("contours", help="confidence-set boundary families per tau")
    p.add_argument("--boundaries", required=True, help="solid family (network CDF)")
    p.add_argument("--boundaries-dashed", help="dashed family (histogram CDF)")
    p.add_argument("--best-fit", help="x,y of the best-fit point")
    p.add_argument("--out", required=True)

    p = sub.add_parser("coverage", help="per-point coverage with tau reference lines")
    p.add_argument("--coverage", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("epidemic", help="bar chart of infected counts per day")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)

    args = ap.parse_args(argv)
    inputs = {}
    style = {}
    if args.kind == "fit_overlay":
        inputs = {"catalog": args.catalog, "curve": args.curve}
    elif args.kind == "contours":
        inputs = {"boundaries": args.boundaries, "boundaries_dashed": args.boundaries_dashed}
        if args.best_fit:
            try:
                style["best_fit"] = tuple(float(v) for v in args.best_fit.split(","))
            except ValueError:
                print(f"bad --best-fit value: {args.best_fit!r}", file=sys.stderr)
                return 2
    elif args.kind == "coverage":
        inputs = {"coverage": args.coverage}
    else:
        inputs = {"data": args.data}
    try:
        result = render(PlotJob(args.kind, inputs, Path(args.out), style))
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {result.path} ({result.n_series} series)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
