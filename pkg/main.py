"""mecal - comparative calibration of qRT-PCR, microarray and RNA-Seq measurements."""
import argparse
import os
import sys
from typing import Any, Dict, List, Optional

from loguru import logger

from commands import calibrate, de, diagnose, fit, rerun, simulate
from commands.common import RunContext, global_flags, input_flags
from config import APP_VERSION, load_config, load_settings
from models.errors import MecalError
from utils.logging import setup_logging


def build_parser() -> argparse.ArgumentParser:
    """Top-level parser with one subparser per command."""
    parser = argparse.ArgumentParser(
        prog="mecal",
        description="Calibrate three gene-expression platforms against each other, test differential "
        "expression, and run the simulation studies.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {APP_VERSION}")
    subparsers = parser.add_subparsers(dest="subcommand", required=True, metavar="COMMAND")

    run_opts = global_flags()
    with_input = [run_opts, input_flags()]
    fit.register(subparsers, with_input)
    calibrate.register(subparsers, with_input)
    de.register(subparsers, with_input)
    diagnose.register(subparsers, with_input)
    simulate.register(subparsers, [run_opts])
    rerun.register(subparsers, [])
    return parser


def main(argv: Optional[List[str]] = None, config: Optional[Dict[str, Any]] = None) -> int:
    """
    Run one command.

    Args:
        argv: Arguments without the program name; defaults to sys.argv[1:]
        config: Pre-resolved configuration (used by `rerun`); skips --config

    Returns:
        Process exit code
    """
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    setup_logging(log_dir=None, level=(args.log_level or os.getenv("MECAL_LOG_LEVEL") or "INFO").upper())

    try:
        settings = load_settings()
        if config is None:
            config = load_config(getattr(args, "config", None))
        log_config = config.get("logging", {}) or {}
        level = (args.log_level or log_config.get("level") or settings.log_level).upper()
        setup_logging(log_dir=log_config.get("dir") or settings.log_dir, level=level)

        ctx = RunContext.resolve(args.subcommand, argv, args, config)
        ctx.dispatch = main
        return args.handler(ctx)
    except MecalError as e:
        logger.error("{}: {}", type(e).__name__, e)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
