"""Command-line entry point: ``htnet run scenario.toml``."""

from __future__ import annotations

import argparse
import logging
import sys

from . import __version__
from .config import MODES, parse_config
from .errors import ConfigError, EnumerationTooLarge, PositivityError
from .runner import TaskError, run_scenario

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BUDGET = 3
EXIT_POSITIVITY = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="htnet", description="Design-based H-T scenario runner.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log task progress")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one scenario config and write its report bundle")
    run.add_argument("config", help="TOML or JSON scenario file")
    run.add_argument("--workers", type=int, help="worker threads inside module calls")
    run.add_argument("--seed", type=int, help="override the config seed")
    run.add_argument("--out", help="output directory (default: from config)")
    run.add_argument("--mode", choices=MODES, help="exact enumeration or Monte Carlo")
    run.add_argument("--mc-reps", type=int, dest="mc_reps", help="Monte Carlo replicates")
    plots = run.add_mutually_exclusive_group()
    plots.add_argument("--plots", dest="plots", action="store_true", default=None, help="also write SVG charts")
    plots.add_argument("--no-plots", dest="plots", action="store_false", help="skip SVG charts")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    overrides = {k: getattr(args, k) for k in ("workers", "seed", "out", "mode", "mc_reps", "plots")}
    try:
        cfg = parse_config(args.config, overrides)
        bundle = run_scenario(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except EnumerationTooLarge as exc:
        print(f"task {getattr(exc, 'task', '?')!r}: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except PositivityError as exc:
        print(f"task {getattr(exc, 'task', '?')!r}: {exc}", file=sys.stderr)
        return EXIT_POSITIVITY
    except TaskError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    for p in bundle.files:
        print(p)
    print(bundle.manifest)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
