"""Main entry point for the diffblocks harness."""

import argparse
import sys
from collections.abc import Sequence
from typing import Any

from diffblocks.core.errors import DiffBlocksError
from diffblocks.core.logging import get_logger, setup_logging
from diffblocks.core.parser import parse_config
from diffblocks.core.schema import ResourceLimits
from diffblocks.experiment.compare import run_compare
from diffblocks.experiment.runner import run_experiment
from diffblocks.experiment.selftest import SUITES, run_selftest

logger = get_logger(__name__)

# flag name -> (config key, type)
_CONFIG_FLAGS: dict[str, tuple[str, Any]] = {
    "scheme": ("scheme", str),
    "flux": ("flux", str),
    "lambda": ("lambda", float),
    "model": ("model", str),
    "weights": ("weights", str),
    "h": ("h", float),
    "tau": ("tau", str),
    "steps": ("steps", int),
    "cycle-length": ("cycle_length", int),
    "cycles": ("cycles", int),
    "inner-iters": ("inner_iters", int),
    "residual-tol": ("residual_tol", float),
    "levels": ("levels", int),
    "pre-smooth": ("pre_smooth", int),
    "post-smooth": ("post_smooth", int),
    "damping": ("damping", float),
    "coarse-solver": ("coarse_solver", str),
    "coarse-sweeps": ("coarse_sweeps", int),
    "tol": ("tol", float),
    "input": ("input", str),
    "signal": ("signal", str),
    "n": ("n", int),
    "output": ("output", str),
    "trajectory": ("trajectory", str),
    "seed": ("seed", int),
}


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--log-level", default="WARNING", help="Logging level")
    parser.add_argument("--log-file", default=None, help="Optional rotating log file")


def _add_config_flags(parser: argparse.ArgumentParser, skip: set[str]) -> None:
    parser.add_argument("--config", default=None, help="key = value configuration file")
    for flag, (key, kind) in _CONFIG_FLAGS.items():
        if flag in skip:
            continue
        parser.add_argument(f"--{flag}", dest=key, type=kind, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="diffblocks",
        description="Diffusion schemes as residual, recurrent and U-net blocks",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="Run one scheme")
    _add_config_flags(run, skip=set())
    _add_common(run)

    compare = commands.add_parser("compare", help="Run a named comparison")
    compare.add_argument("mode", nargs="?", default=None, help="Comparison mode")
    _add_config_flags(compare, skip={"scheme"})
    _add_common(compare)

    selftest = commands.add_parser("selftest", help="Run the acceptance suites")
    selftest.add_argument("--report", default=None, help="CSV report path (default stdout)")
    selftest.add_argument(
        "--suite", type=int, action="append", choices=sorted(SUITES), help="Suite to run"
    )
    selftest.add_argument("--timeout", type=float, default=60.0, help="Seconds per suite")
    _add_common(selftest)
    return parser


def _overrides(args: argparse.Namespace) -> dict[str, Any]:
    keys = {key for key, _ in _CONFIG_FLAGS.values()}
    return {key: value for key, value in vars(args).items() if key in keys}


def main(argv: Sequence[str] | None = None) -> int:
    """Main entry point."""
    args = build_parser().parse_args(argv)
    setup_logging(log_level=args.log_level, log_file=args.log_file)

    try:
        if args.command == "selftest":
            return run_selftest(args.report, args.suite, ResourceLimits(timeout_sec=args.timeout))

        overrides = _overrides(args)
        if args.command == "compare":
            overrides["compare"] = args.mode
        cfg = parse_config(args.config, overrides)
        if args.command == "compare":
            return run_compare(cfg)
        return run_experiment(cfg)
    except DiffBlocksError as e:
        logger.error("Invalid invocation", extra={"error": str(e), "exit_code": e.exit_code})
        print(str(e), file=sys.stderr)
        return e.exit_code
    except OSError as e:
        logger.error("Cannot read configuration", extra={"error": str(e)})
        print(f"Error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
