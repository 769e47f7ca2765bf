"""
Command line entry point: python -m cli <command> [--config FILE] [--out DIR] [--threads N]

Exit codes: 0 ok, 1 verification failed, 2 configuration or domain error,
3 numerical failure, 4 unphysical singularity pattern.
"""
import argparse
import sys
from typing import List, Optional

from loguru import logger

from cli.commands import COMMANDS, EXAMPLE_NF_CONFIG
from config.config_manager import ConfigManager
from utils.exceptions import ScatteringError
from utils.logger import setup_logger

HELP = {
    "phases": "eigenphases and mixing angle of the configured potential (CSV)",
    "transform": "two-fold transformation of the configured potential (V2 table + metadata)",
    "chain": "iterated transformation over all transform.chi values",
    "verify": "transform, re-solve and check every property (report; exit 1 on failure)",
    "example-nf": "phases, V2 table and verification for the bundled s-d example",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="susy2", description="Eigenphase-preserving two-fold SUSY transformations")
    commands = parser.add_subparsers(dest="command", required=True)
    for name, text in HELP.items():
        command = commands.add_parser(name, help=text)
        command.add_argument("--config", help="YAML run configuration (default: config/<env>.yaml)")
        command.add_argument("--env", help="configuration name under config/ when --config is absent")
        command.add_argument("--out", help="output directory, overrides output.dir")
        command.add_argument("--threads", type=int, help="worker threads for per-k solves")
        command.add_argument("--log-dir", help="also write rotating log files to this directory")
        command.add_argument("--verbose", action="store_true", help="debug output on the console")
    return parser


def _load(args: argparse.Namespace) -> ConfigManager:
    if args.config:
        return ConfigManager.from_file(args.config)
    if args.command == "example-nf" and not args.env:
        return ConfigManager.from_file(EXAMPLE_NF_CONFIG)
    return ConfigManager(env=args.env)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = "DEBUG" if args.verbose else "INFO"
    setup_logger(log_dir=args.log_dir or "logs", level=level, files=args.log_dir is not None)
    try:
        manager = _load(args)
        if not args.verbose and manager.log_level != level:
            setup_logger(log_dir=args.log_dir or "logs", level=manager.log_level, files=args.log_dir is not None)
        config = manager.run_config().with_overrides(output_dir=args.out, threads=args.threads)
        logger.info(f"Running '{args.command}' with {manager.config_file}")
        return COMMANDS[args.command](config)
    except ScatteringError as error:
        logger.error(f"{args.command} failed ({type(error).__name__}): {error}")
        print(f"error: {error}", file=sys.stderr)
        return error.exit_code


if __name__ == "__main__":
    sys.exit(main())
