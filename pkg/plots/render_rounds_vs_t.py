#!/usr/bin/env python3
"""Render the rounds-to-target-vs-local-period bars from a sweep_local CSV."""

import argparse

from plotlib import PlotSpec, render


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--in", dest="csv_path", required=True,
                        help="sweep_local.csv produced by the sweep command")
    parser.add_argument("--out", dest="out_path", required=True,
                        help="output image path (png)")
    args = parser.parse_args()
    info = render(PlotSpec(csv_path=args.csv_path, kind="rounds_vs_T",
                           out_path=args.out_path))
    print(f"wrote {info['out_path']} ({info['bars']} bars)")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
