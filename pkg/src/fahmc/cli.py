"""Command-line entry point.

Verbs: ``run``, ``dim-vs-comm``, ``sweep-stepsize``, ``sweep-local``,
``compare``, ``gen-logistic-data``.  Exit codes: 0 success, 2 configuration
error, 3 divergence, 4 non-convergence.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .bench import (cmd_compare, cmd_dim_vs_comm, cmd_run, cmd_sweep_local,
                    cmd_sweep_stepsize, write_local_sweep_csv, write_sweep_csv)
from .config import parse_config
from .errors import ConfigError, ContractError, DivergenceError, NonConvergenceError
from .models import generate_logistic_data, save_logistic_csv

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGENCE = 3
EXIT_NONCONVERGENCE = 4


def _add_common(sub):
    sub.add_argument("--config", required=True, help="experiment config file")
    sub.add_argument("--seed", type=int, default=None,
                     help="override [federation] master_seed")
    sub.add_argument("--workers", type=int, default=1,
                     help="concurrent replicates / sweep points")
    sub.add_argument("--out", default=None, help="override [output] directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fahmc",
        description="Federated averaging HMC experiment harness")
    subs = parser.add_subparsers(dest="verb", required=True)

    run = subs.add_parser("run", help="execute one configured run")
    _add_common(run)

    dim = subs.add_parser("dim-vs-comm",
                          help="communication rounds vs dimension scaling")
    _add_common(dim)
    dim.add_argument("--dims", default="2,10,50,100",
                     help="comma-separated dimensions")
    dim.add_argument("--threshold", type=float, default=0.1,
                     help="squared-W2 stopping threshold")
    dim.add_argument("--ensembles", type=int, default=1,
                     help="independent ensembles averaged per dimension")

    sweep = subs.add_parser("sweep-stepsize",
                            help="marginal error vs stepsize for fa-hmc and fa-ld")
    _add_common(sweep)
    sweep.add_argument("--etas", required=True, help="comma-separated stepsizes")

    local = subs.add_parser("sweep-local",
                            help="rounds to reach a marginal-error target vs T")
    _add_common(local)
    local.add_argument("--periods", required=True, help="comma-separated T values")
    local.add_argument("--threshold", type=float, required=True,
                       help="marginal-error target")

    comp = subs.add_parser("compare",
                           help="marginal error / W2 between two snapshot files")
    comp.add_argument("samples_a")
    comp.add_argument("samples_b")

    gen = subs.add_parser("gen-logistic-data",
                          help="write a synthetic logistic-regression CSV")
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--dim", type=int, required=True)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--feature-sigma", type=float, default=1.0)
    gen.add_argument("--out-file", required=True)

    return parser


def _load(args):
    cfg = parse_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, master_seed=args.seed)
    if args.out is not None:
        cfg = replace(cfg, directory=args.out)
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except (ConfigError, ContractError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as err:
        where = f" (node {err.node}, iteration {err.iteration})" \
            if err.node is not None else ""
        print(f"divergence: {err}{where}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except NonConvergenceError as err:
        print(f"non-convergence: {err}", file=sys.stderr)
        return EXIT_NONCONVERGENCE


def _dispatch(args) -> int:
    if args.verb == "run":
        cfg = _load(args)
        summary = cmd_run(cfg, workers=args.workers)
        print(summary.to_json())
        return EXIT_OK

    if args.verb == "dim-vs-comm":
        cfg = _load(args)
        dims = [int(part) for part in args.dims.split(",")]
        result = cmd_dim_vs_comm(dims, args.threshold, cfg, workers=args.workers,
                                 ensembles=args.ensembles)
        out = Path(cfg.directory)
        out.mkdir(parents=True, exist_ok=True)
        path = out / "dim_vs_comm.csv"
        result.write_csv(path)
        print(json.dumps({
            "points": [{"d": p.dim, "rounds": p.rounds, "eta": p.eta,
                        "replicates": p.replicates} for p in result.points],
            "alpha": result.alpha, "beta": result.beta,
            "r_squared": result.r_squared, "csv": str(path)},
            indent=2, sort_keys=True))
        return EXIT_OK

    if args.verb == "sweep-stepsize":
        cfg = _load(args)
        etas = [float(part) for part in args.etas.split(",")]
        rows = cmd_sweep_stepsize(etas, cfg, workers=args.workers)
        out = Path(cfg.directory)
        out.mkdir(parents=True, exist_ok=True)
        path = out / "sweep_stepsize.csv"
        write_sweep_csv(rows, path)
        print(json.dumps({"rows": len(rows), "csv": str(path)}, sort_keys=True))
        return EXIT_OK

    if args.verb == "sweep-local":
        cfg = _load(args)
        periods = [int(part) for part in args.periods.split(",")]
        rows = cmd_sweep_local(periods, args.threshold, cfg, workers=args.workers)
        out = Path(cfg.directory)
        out.mkdir(parents=True, exist_ok=True)
        path = out / "sweep_local.csv"
        write_local_sweep_csv(rows, path)
        print(json.dumps({"rows": len(rows), "csv": str(path)}, sort_keys=True))
        return EXIT_OK

    if args.verb == "compare":
        print(json.dumps(cmd_compare(args.samples_a, args.samples_b),
                         indent=2, sort_keys=True))
        return EXIT_OK

    # gen-logistic-data
    X, y, _ = generate_logistic_data(args.n, args.dim, args.seed,
                                     feature_sigma=args.feature_sigma)
    save_logistic_csv(args.out_file, X, y)
    print(json.dumps({"rows": args.n, "dim": args.dim, "path": args.out_file},
                     sort_keys=True))
    return EXIT_OK
