"""Command line interface for the unitlab experiment harness."""

import argparse
import logging
import sys
from dataclasses import replace

from ..core.config import config_help, load_config
from ..core.constants import ExitStatus, RunMode
from ..core.error_handling import (
    BoundViolationError,
    ConfigurationError,
    TrainingDivergedError,
    UnitLabError,
)
from ..core.logging_config import LogContext, setup_logging
from .experiments import RUNNERS

logger = logging.getLogger(__name__)

COMMAND_HELP = {
    RunMode.TRAIN: "train the configured network and checkpoint every epoch",
    RunMode.MOMENTS: "track layer-output moments for BN and unitization from shared weights",
    RunMode.EMDIST: "estimate per-epoch EM distances between saved checkpoints",
    RunMode.BOUNDS: "verify the moment bounds on seeded random instances",
    RunMode.ORACLE_CHECK: "cross-check the exact EM oracles",
}


def get_version() -> str:
    """Get the current version of unitlab."""
    try:
        import unitlab

        return unitlab.__version__
    except (ImportError, AttributeError):
        return "0.0.0"


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {text}")
    return value


def create_parser() -> argparse.ArgumentParser:
    """Create the argument parser with one subcommand per experiment."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--config", type=str, help="configuration file (default: ./unitlab_config.toml)"
    )
    common.add_argument("--seed", type=_seed, help="override the configured seed")
    common.add_argument("--out-dir", dest="out_dir", type=str, help="override the run directory")
    common.add_argument("--quiet", action="store_true", help="only log warnings and errors")

    parser = argparse.ArgumentParser(
        prog="unitlab",
        description="Unitization and normalization experiments with exact EM distance checks",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=f"""
Examples:

  unitlab train --config mnist.toml
  unitlab emdist --config mnist.toml --out-dir runs/mnist
  unitlab bounds --seed 7 --quiet

Exit status: 0 ok, 1 error, 2 bound violation, 3 training diverged.

{config_help()}
""",
    )
    parser.add_argument("--version", action="version", version=f"unitlab {get_version()}")

    subparsers = parser.add_subparsers(dest="command", help="experiment to run")
    for mode, help_text in COMMAND_HELP.items():
        subparsers.add_parser(
            mode.value,
            parents=[common],
            help=help_text,
            description=help_text,
        )
    return parser


def main(argv: list[str] | None = None) -> int:
    """Main entry point."""
    parser = create_parser()
    args = parser.parse_args(argv)

    if not args.command:
        parser.print_help()
        return ExitStatus.ERROR

    mode = RunMode(args.command)
    setup_logging(level="WARNING" if args.quiet else "INFO")

    try:
        cfg = load_config(args.config, mode)
        overrides = {"mode": mode.value}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.out_dir is not None:
            overrides["out_dir"] = args.out_dir
        cfg = replace(cfg, **overrides)

        setup_logging(
            level="WARNING" if args.quiet else cfg.log_level,
            log_file=cfg.log_file or None,
        )
        with LogContext(mode.value):
            RUNNERS[mode](cfg)
        return ExitStatus.OK

    except BoundViolationError as e:
        logger.error(f"Bound violation: {e.message}")
        return ExitStatus.BOUND_VIOLATION
    except TrainingDivergedError as e:
        logger.error(f"Training diverged: {e.message}")
        return ExitStatus.DIVERGED
    except ConfigurationError as e:
        logger.error(f"Configuration error: {e.message}")
        return ExitStatus.ERROR
    except UnitLabError as e:
        logger.error(f"{type(e).__name__}: {e.message}")
        return ExitStatus.ERROR
    except KeyboardInterrupt:
        logger.warning("Interrupted")
        return ExitStatus.ERROR
    except Exception as e:
        logger.error(f"Unexpected error: {e}", exc_info=logger.isEnabledFor(logging.DEBUG))
        return ExitStatus.ERROR


if __name__ == "__main__":
    sys.exit(main())
