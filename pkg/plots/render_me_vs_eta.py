#!/usr/bin/env python3
"""Render the marginal-error-vs-stepsize figure from a sweep_stepsize CSV."""

import argparse

from plotlib import PlotSpec, render


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--in", dest="csv_path", required=True,
                        help="sweep_stepsize.csv produced by the sweep command")
    parser.add_argument("--out", dest="out_path", required=True,
                        help="output image path (png)")
    args = parser.parse_args()
    info = render(PlotSpec(csv_path=args.csv_path, kind="me_vs_eta",
                           out_path=args.out_path))
    print(f"wrote {info['out_path']} ({', '.join(info['series'])})")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
