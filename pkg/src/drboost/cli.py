"""Command-line entry point: ``drboost run | check | plotdata | list``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .checks import DEFAULT_CASES, run_invariant_suite
from .harness import REGISTRY, ConfigError, emit_plot_data, load_config, run_experiment

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_CONFIG = 2


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="drboost", description="Boosted DR-submodular maximization experiments")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment from a JSON config")
    run.add_argument("config")
    run.add_argument("--out", help="override the output directory")
    run.add_argument("--seed", type=int, help="first seed; with --trials gives seed..seed+trials-1")
    run.add_argument("--trials", type=int, help="number of seeds")
    run.add_argument("--workers", type=int, default=1)

    chk = sub.add_parser("check", help="run the invariant suite")
    chk.add_argument("--filter", default=None, help="tag or tag.name substring")
    chk.add_argument("--seed", type=int, default=0)
    chk.add_argument("--trials", type=int, default=DEFAULT_CASES, help="randomized cases per check")
    chk.add_argument("--out", help="also write the JSON report here")

    pd = sub.add_parser("plotdata", help="emit x,series_name,y CSVs from a results directory")
    pd.add_argument("dir")

    sub.add_parser("list", help="list experiment and algorithm ids")
    return p


def _cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
        if args.seed is not None or args.trials is not None:
            first = args.seed if args.seed is not None else (cfg.seeds[0] if cfg.seeds else 0)
            count = args.trials if args.trials is not None else len(cfg.seeds)
            if count < 1:
                raise ConfigError("--trials must be >= 1")
            cfg.seeds = list(range(first, first + count))
        root = run_experiment(cfg, out=args.out, workers=max(1, args.workers))
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    print(root)
    return EXIT_OK


def _cmd_check(args) -> int:
    report = run_invariant_suite(args.filter, seed=args.seed, cases=args.trials)
    text = json.dumps(report, indent=2)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    print(text)
    return EXIT_OK if report["ok"] else EXIT_VIOLATION


def _cmd_plotdata(args) -> int:
    try:
        paths = emit_plot_data(args.dir)
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    for p in paths:
        print(p)
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "check":
        return _cmd_check(args)
    if args.command == "plotdata":
        return _cmd_plotdata(args)
    for exp, spec in sorted(REGISTRY.items()):
        print(f"{exp}: {', '.join(spec.algorithms)}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
