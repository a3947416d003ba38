#!/usr/bin/env python3
"""Render the squared-rounds-vs-dimension scatter with its stored fit from a
dim_vs_comm CSV."""

import argparse

from plotlib import PlotSpec, render


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--in", dest="csv_path", required=True,
                        help="dim_vs_comm.csv produced by the scaling command")
    parser.add_argument("--out", dest="out_path", required=True,
                        help="output image path (png)")
    args = parser.parse_args()
    info = render(PlotSpec(csv_path=args.csv_path, kind="dim_scaling",
                           out_path=args.out_path))
    print(f"wrote {info['out_path']} ({info['annotation']})")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
