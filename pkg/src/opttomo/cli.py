"""Command-line front end for the experiment harness."""
from __future__ import annotations

import argparse
import sys

from .config import ConfigError, load_config, with_overrides
from .harness import RUNNERS, run_rates


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="opttomo",
        description="kinetic-vs-diffusive forward and posterior studies")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
            ("forward", "evaluate both forward maps, write CSV matrices"),
            ("rates", "expansion-residual and forward-gap rate studies"),
            ("posterior-compare", "KL/Hellinger sweep between posteriors"),
            ("linearized-compare", "kernel banks and Gaussian posteriors"),
            ("make-data", "generate and persist a synthetic data vector")):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True,
                         help="path to a JSON experiment config")
        cmd.add_argument("--out", default=None,
                         help="override the config's output directory")
        cmd.add_argument("--seed", type=int, default=None,
                         help="override the config's master seed")
        cmd.add_argument("--threads", type=int, default=None,
                         help="worker threads (results are unaffected)")
        if name == "rates":
            cmd.add_argument("--refine", action="store_true",
                             help="rerun at doubled resolution and report "
                                  "metric shifts")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
        config = with_overrides(config, out_dir=args.out,
                                master_seed=args.seed,
                                threads=args.threads)
        if args.command == "rates":
            report = run_rates(config, refine=args.refine)
        else:
            report = RUNNERS[args.command](config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    print(f"{report.kind}: fingerprint {report.fingerprint[:12]} "
          f"({report.wall_time:.1f}s)")
    for study in report.studies:
        print(f"  {study.metric}: slope {study.slope:.3f} "
              f"(R^2 {study.r_squared:.3f}, n={study.n_points})")
    for note in report.warnings:
        print(f"  warning: {note}")
    print(f"  artifacts: {len(report.artifacts)} files in "
          f"{config.out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
