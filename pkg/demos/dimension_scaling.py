#!/usr/bin/env python3
"""How communication cost scales with dimension.

With a constant stepsize ``0.02 / d**(1/4)`` the number of rounds needed to
bring the squared W2 distance to the product target below 0.1 grows so that
(rounds)^2 is approximately proportional to d.  Writes the scaling CSV
consumed by plots/render_dim_scaling.py.  A desk-scale run; expect about a
minute.
"""

import argparse

from fahmc.bench import cmd_dim_vs_comm
from fahmc.config import ExperimentConfig


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="dimension_scaling.csv")
    parser.add_argument("--dims", default="2,10,30,60")
    args = parser.parse_args()
    dims = [int(part) for part in args.dims.split(",")]

    cfg = ExperimentConfig(
        model_kind="quadratic_fleet", dim=2, means=(20.0, 1.0),
        precisions=(1.0, 0.5), algorithm="fa-hmc", local_period=10,
        leapfrog_steps=5, rho=1.0, master_seed=21, schedule_kind="constant",
        eta=0.02, stop_rule="w2_threshold", threshold=0.1,
        max_iterations=1_000_000, replicates=50, directory="/tmp/fahmc_demo")

    result = cmd_dim_vs_comm(dims, 0.1, cfg)
    print(f"{'d':>5} {'eta':>8} {'replicates':>10} {'rounds':>7}")
    for p in result.points:
        print(f"{p.dim:5d} {p.eta:8.4f} {p.replicates:10d} {p.rounds:7.0f}")
    print(f"least-squares fit (rounds)^2 = {result.alpha:.1f} * d + "
          f"{result.beta:.1f}, R^2 = {result.r_squared:.3f}")
    result.write_csv(args.out)
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
