"""figures CLI: render experiment CSVs into the comparison figures."""

from __future__ import annotations

import argparse
import sys

from .render import FIGURE_IDS, FigureSpec, render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="figures",
        description="Render wncs experiment CSVs into figures",
    )
    parser.add_argument("--results", default=None, help="results.csv from `wncs sweep`")
    parser.add_argument("--curve", default=None, help="learning_curve.csv from `wncs train`")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument(
        "--fig",
        choices=FIGURE_IDS,
        action="append",
        default=None,
        help="figure id (repeatable; default: every figure whose input is given)",
    )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    wanted = args.fig or [
        fid for fid in FIGURE_IDS
        if (fid == "convergence" and args.curve) or (fid != "convergence" and args.results)
    ]
    if not wanted:
        print("nothing to render: pass --results and/or --curve", file=sys.stderr)
        return 2
    try:
        for fid in wanted:
            out = render(
                FigureSpec(
                    figure_id=fid,
                    out_dir=args.out,
                    results_csv=args.results,
                    curve_csv=args.curve,
                )
            )
            print(f"{fid}: series {', '.join(out['series'])} -> {out['paths'][0]}")
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
