"""Command-line experiment runner.

Subcommands:
    run <config.json>      execute the configured estimators, write
                           report.json and per-replica batch-means CSVs
    sweep <config.json>    run every site count in the config's sweep list,
                           write sweep.csv / sweep.json
    oracle <config.json>   print exact stationary values (ssep, n <= 12)

--seed, --t-final and --output override the corresponding config keys.
Exit codes: 0 success, 2 configuration error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import sys

from .config import load_config
from .engine import ConfigurationError
from .experiment import dumps_canonical, oracle_values, run_experiment, run_sweep


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("config", help="path to the JSON experiment config")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config's seed")
    parser.add_argument("--t-final", type=float, default=None, dest="t_final",
                        help="override the config's t_final")
    parser.add_argument("--output", default=None,
                        help="override the config's output directory")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="couplemc",
        description="Markov jump process simulation with coupling control variates")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_common(sub.add_parser("run", help="run the configured estimators"))
    _add_common(sub.add_parser("sweep", help="run an N-sweep and tabulate error ratios"))
    _add_common(sub.add_parser("oracle", help="print exact small-chain values"))
    return parser


def _summarize(report) -> None:
    for point in report.points:
        for obs in point.observables:
            parts = [f"n={point.n}", f"replica={point.replica}", obs.name]
            if obs.simple_estimate is not None:
                parts.append(f"simple={obs.simple_estimate:.6g}±{obs.simple_se:.2g}")
            if obs.coupled_estimate is not None:
                parts.append(f"coupled={obs.coupled_estimate:.6g}±{obs.coupled_se:.2g}")
            if obs.e_n is not None:
                parts.append(f"e_N={obs.e_n:.3g}")
            print("  ".join(parts))
    for path in report.paths:
        print(f"wrote {path}")
    print(f"wall time: {report.wall_time:.2f} s")


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = load_config(args.config, seed=args.seed,
                             t_final=args.t_final, output=args.output)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        if args.command == "run":
            _summarize(run_experiment(config))
        elif args.command == "sweep":
            _summarize(run_sweep(config))
        else:
            print(dumps_canonical(oracle_values(config)), end="")
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
