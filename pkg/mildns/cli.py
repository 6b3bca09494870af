"""Command-line harness: ``mildns-verify <experiment> [options]``."""

import argparse
import logging
import sys
from typing import List, Optional

from .config import EXPERIMENTS, ExperimentConfig, config_path_from_env, load_config
from .errors import MildNSError
from .experiments import run_experiment

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2

_DESCRIPTIONS = {
    "corpus": "Generate a test corpus and summarize (optionally dump) its fields",
    "norms": "Lebesgue, Lorentz, Sobolev-Lorentz and Besov norms of a corpus",
    "embedding": "Heat-flow embedding ratios under resolution doubling",
    "product": "Fractional product estimate ratios on random pairs",
    "bilinear": "Empirical bilinear Duhamel constants over a horizon sweep",
    "solve": "Smallness gates, Picard iteration and oracle distance per datum",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mildns-verify",
                                     description="Mild-solution Navier-Stokes verification experiments")
    subparsers = parser.add_subparsers(dest="experiment", required=True, metavar="EXPERIMENT")
    for name in EXPERIMENTS:
        sub = subparsers.add_parser(name, help=_DESCRIPTIONS[name], description=_DESCRIPTIONS[name])
        sub.add_argument(
            "--config",
            type=str,
            help="key=value config file (default: $MILDNS_CONFIG, else built-in defaults)"
        )
        sub.add_argument(
            "--out",
            type=str,
            help="CSV output path (overrides the config's output)"
        )
        sub.add_argument(
            "--seed",
            type=int,
            help="Corpus seed (overrides the config's seed)"
        )
        sub.add_argument(
            "--no-timestamp",
            action="store_true",
            help="Omit the timestamp comment line from the CSV"
        )
        sub.add_argument(
            "-v", "--verbose",
            action="count",
            default=0,
            help="-v for progress, -vv for per-round diagnostics"
        )
        if name == "solve":
            sub.add_argument(
                "--report-dir",
                type=str,
                help="Write a markdown report per datum into this folder"
            )
        if name == "corpus":
            sub.add_argument(
                "--dump-dir",
                type=str,
                help="Write each field's spectral coefficients into this folder"
            )
    return parser


def _configure_logging(verbosity: int) -> None:
    level = logging.WARNING if verbosity <= 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    """Config file (flag, then environment) with the command-line overrides applied."""
    path = args.config or config_path_from_env()
    cfg = load_config(path) if path else ExperimentConfig()
    changes = {"experiment": args.experiment}
    if args.out:
        changes["output"] = args.out
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.no_timestamp:
        changes["timestamp"] = False
    if getattr(args, "report_dir", None):
        changes["report_dir"] = args.report_dir
    if getattr(args, "dump_dir", None):
        changes["dump_dir"] = args.dump_dir
    return cfg.replace(**changes)


def main(argv: Optional[List[str]] = None) -> int:
    """Run one experiment; returns the process exit code."""
    args = build_parser().parse_args(argv)
    _configure_logging(args.verbose)

    try:
        cfg = resolve_config(args)
        print(f"Mild solution verification: {cfg.experiment}")
        print("=" * 50)
        print(f"Grid: {cfg.n}^{cfg.dim} on a box of side {cfg.box_length:g}")
        print(f"Output: {cfg.output}")
        print("=" * 50)
        result = run_experiment(cfg)
    except MildNSError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_IO

    print(f"{len(result.rows)} row(s) written to {result.path}")
    degenerate = sum(int(row.get("degenerate") or 0) for row in result.rows
                     if row.get("kind", "field") in ("field", "pair"))
    if degenerate:
        print(f"{degenerate} degenerate row(s) flagged")
    print("=" * 50)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
