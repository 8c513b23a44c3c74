# !/usr/bin/env python3
import argparse
import asyncio
import sys
from typing import List, Optional

from src.commands import cmd_converge, cmd_flow, cmd_mech, cmd_ode, cmd_simulate, cmd_verify
from src.config import Config, load_experiment_config
from src.console import visualizer
from src.exceptions import BranchFlowError, ConfigError
from src.logger import define_log_level, logger
from src.schema import SubCommand, Verdict


EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

COMMANDS = {
    SubCommand.MECH: cmd_mech,
    SubCommand.SIMULATE: cmd_simulate,
    SubCommand.FLOW: cmd_flow,
    SubCommand.ODE: cmd_ode,
    SubCommand.CONVERGE: cmd_converge,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Branching flows: exact simulation and scaling-limit checks")
    parser.add_argument("command", choices=[c.value for c in SubCommand], help="Subcommand to run")
    parser.add_argument("files", nargs="*", help="Path files (verify only)")
    parser.add_argument(
        "-c",
        "--config",
        default=None,
        help="Experiment config (default: config/config.toml, then config/config.example.toml)",
    )
    parser.add_argument("--seed", type=int, default=None, help="Override run.master_seed")
    parser.add_argument("--replicas", type=int, default=None, help="Override run.replicas")
    parser.add_argument("--workers", type=int, default=None, help="Override run.workers")
    parser.add_argument("-o", "--output-dir", default=None, help="Override run.output_dir")
    parser.add_argument(
        "--log-level",
        default="INFO",
        choices=["OFF", "DEBUG", "INFO", "WARNING", "ERROR"],
        help="Terminal log level (default: INFO)",
    )
    return parser


def _config_path(arg: Optional[str]):
    return arg if arg else Config.config_path()


async def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point for the application."""
    parser = build_parser()
    args = parser.parse_args(argv)
    command = SubCommand(args.command)
    define_log_level(print_level=args.log_level, name=command.value)

    if command is not SubCommand.VERIFY and args.files:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog}: error: only verify takes file arguments", file=sys.stderr)
        return EXIT_USAGE
    if command is SubCommand.VERIFY and not args.files:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog}: error: verify needs at least one path file", file=sys.stderr)
        return EXIT_USAGE

    try:
        if command is SubCommand.VERIFY:
            cfg = load_experiment_config(args.config) if args.config else None
            if cfg is not None:
                cfg = cfg.with_overrides(output_dir=args.output_dir)
            result = await cmd_verify(args.files, cfg, output_dir=args.output_dir)
        else:
            cfg = load_experiment_config(_config_path(args.config)).with_overrides(
                master_seed=args.seed, replicas=args.replicas, workers=args.workers, output_dir=args.output_dir
            )
            logger.info(f"Running {command.value} with config hash {cfg.config_hash()[:12]}")
            result = await COMMANDS[command](cfg)
    except ConfigError as e:
        visualizer.show_error(e.message, "configuration")
        logger.error(f"Configuration error: {e.message}")
        return EXIT_USAGE
    except BranchFlowError as e:
        visualizer.show_error(e.message, type(e).__name__)
        logger.error(f"{command.value} failed: {e.message}")
        return EXIT_FAIL
    except KeyboardInterrupt:
        visualizer.show_error("interrupted", "Ctrl+C")
        return EXIT_FAIL

    return EXIT_OK if result.verdict is Verdict.PASS else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(asyncio.run(main()))
