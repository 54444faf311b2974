"""Command line entry point: ``ftlnet <verb> --config FILE [options]``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path as FsPath

from . import config as cfgmod
from . import experiments
from .macro import CFLError

SEED_ENV = "FTLNET_SEED"


def _load(args) -> cfgmod.ExperimentConfig:
    path = args.config
    if not os.path.exists(path):
        path = cfgmod.bundled(path)
    cfg = cfgmod.load(path)
    if args.snapshot:
        cfg.snapshots = sorted(args.snapshot)
    seed = args.seed if args.seed is not None else os.environ.get(SEED_ENV)
    if seed is not None:
        cfg.micro.seed = int(seed)
    return cfg


def _out(args, cfg) -> FsPath:
    return FsPath(args.out or cfg.output_dir)


def check(cfg: cfgmod.ExperimentConfig) -> None:
    """Build every object a run would build, so bad configs fail before stepping."""
    experiments.initial_macro(cfg)
    experiments.seed(cfg)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="ftlnet", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb in ("run-micro", "run-macro", "compare", "converge", "validate"):
        p = sub.add_parser(verb)
        p.add_argument("--config", required=True,
                       help="config file, or the name of a bundled config")
        p.add_argument("--out", help="output directory (default: output_dir from the config)")
        p.add_argument("--seed", type=int, help=f"override the micro seed (env {SEED_ENV})")
        p.add_argument("--snapshot", type=float, action="append", default=[],
                       help="also write profiles at this time (repeatable)")
        if verb == "run-micro":
            p.add_argument("--trajectories", action="store_true",
                           help="write every vehicle at every step to trajectories.csv")
        if verb == "converge":
            p.add_argument("--seeds", type=int, help="replicas per rung for random turning")
            p.add_argument("--workers", type=int, default=1)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load(args)
        if args.verb == "validate":
            check(cfg)
            print(f"{cfg.name}: ok")
            return 0
        out = _out(args, cfg)
        check(cfg)
        if args.verb == "run-micro":
            res = experiments.run_micro(cfg, out, trajectories=args.trajectories)
            print(json.dumps(res.summary, indent=2))
        elif args.verb == "run-macro":
            res = experiments.run_macro(cfg, out)
            print(json.dumps(res.summary, indent=2))
        elif args.verb == "compare":
            table = experiments.run_compare(cfg, out)
            for road, v in table.items():
                print(f"{road},{v:.6g}")
        else:
            rows = experiments.run_convergence(cfg, seeds=args.seeds, out_dir=out,
                                               workers=args.workers)
            print("ell_n,dt,seeds,mean_L1,std_L1")
            for r in rows:
                print(f"{r['ell_n']:g},{r['dt']:g},{r['seeds']},{r['mean_L1']:.6g},"
                      f"{r['std_L1']:.6g}")
    except (cfgmod.ConfigError, CFLError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
