#!/usr/bin/env python3
"""
Price formation experiment runner.

    run --preset case1 [--seed 0] [--iters 10000] [--backend tape|adjoint|fd] [--out DIR]
    run --config experiment.toml [...]
    compare runs/a/omega.csv runs/b/omega.csv [--out diff.json]
"""

import argparse
import logging
import sys
from datetime import datetime
from pathlib import Path
from typing import List, Optional

# Add project root to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent.parent))

from src.artifacts import (
    LOG_FILE,
    GridMismatchError,
    RunDirectoryError,
    compare_price_files,
    create_run_directory,
    write_report,
)
from src.config import PRESETS, ConfigError, RunConfig, apply_overrides, load_run_config, preset_config
from src.runner import ExperimentRunner
from src.solver import DivergenceError
from src.supply import SupplyFileError


EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_GRID_MISMATCH = 4

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

logger = logging.getLogger(__name__)


def setup_logging(verbose: bool = False):
    """Console logging; the run log file is attached once the output directory exists."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format=LOG_FORMAT,
        handlers=[logging.StreamHandler(sys.stdout)],
        force=True,
    )


def attach_log_file(output_dir: Path) -> logging.Handler:
    handler = logging.FileHandler(output_dir / LOG_FILE, encoding='utf-8')
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    logging.getLogger().addHandler(handler)
    return handler


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Equilibrium price formation by primal-dual iteration")
    parser.add_argument('--verbose', '-v', action='store_true', help="Enable debug logging")
    commands = parser.add_subparsers(dest='command', required=True)

    run = commands.add_parser('run', help="Solve one experiment and write its artifacts")
    run.add_argument('--preset', choices=PRESETS, help="Built-in experiment preset")
    run.add_argument('--config', help="TOML run configuration")
    run.add_argument('--seed', type=int, help="Seed for the random initial iterates")
    run.add_argument('--supply-seed', type=int, help="Seed for a Wiener supply path")
    run.add_argument('--iters', type=int, help="Number of iterations")
    run.add_argument('--tau-alpha', type=float, help="Primal step size")
    run.add_argument('--tau-omega', type=float, help="Dual step size")
    run.add_argument('--sigma', type=float, help="Dual damping weight")
    run.add_argument('--backend', choices=('tape', 'adjoint', 'fd'), help="Gradient backend")
    run.add_argument('--out', help="Output directory (must not already hold a run)")

    compare = commands.add_parser('compare', help="Discrepancy between two omega.csv files")
    compare.add_argument('file_a')
    compare.add_argument('file_b')
    compare.add_argument('--out', help="Also save the comparison as JSON")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    if args.config:
        config = load_run_config(args.config, preset=args.preset)
    elif args.preset:
        config = preset_config(args.preset)
    else:
        raise ConfigError("one of --preset or --config is required")

    if args.seed is not None and not 0 <= args.seed < 2**64:
        raise ConfigError(f"--seed must be an unsigned 64-bit integer, got {args.seed}")
    try:
        return apply_overrides(
            config,
            seed=args.seed,
            iterations=args.iters,
            tau_alpha=args.tau_alpha,
            tau_omega=args.tau_omega,
            sigma=args.sigma,
            backend=args.backend,
            output_dir=args.out,
            supply_seed=args.supply_seed,
        )
    except ValueError as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(str(e)) from e


def default_output_dir(config: RunConfig) -> Path:
    timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
    return Path('runs') / f"{config.preset or 'custom'}_{timestamp}"


def cmd_run(args: argparse.Namespace) -> int:
    try:
        config = resolve_config(args)
        output_dir = create_run_directory(config.output_dir or default_output_dir(config))
    except ConfigError as e:
        logger.error(f"Invalid configuration: {e}")
        return EXIT_CONFIG
    except RunDirectoryError as e:
        logger.error(str(e))
        return EXIT_CONFIG

    handler = attach_log_file(output_dir)
    try:
        logger.info(f"Writing run to {output_dir}")
        report = ExperimentRunner(config, output_dir).run()
    except (ConfigError, SupplyFileError) as e:
        logger.error(f"Invalid configuration: {e}")
        return EXIT_CONFIG
    except DivergenceError as e:
        logger.error(f"Solver diverged: {e}")
        return EXIT_DIVERGED
    except Exception as e:
        logger.exception(f"Unexpected error: {e}")
        return EXIT_ERROR
    finally:
        logging.getLogger().removeHandler(handler)
        handler.close()

    print(f"Run complete: {output_dir}")
    print(f"  clearing residual: {report['clearing_residual_sup']:.3e}")
    for key in ('linf_omega_error', 'linf_trajectory_error', 'linf_regular_part_error'):
        if key in report:
            print(f"  {key}: {report[key]:.3e}")
    if 'terminal_clusters' in report:
        print(f"  terminal clusters: {report['terminal_clusters']['counts']}")
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    try:
        comparison = compare_price_files(args.file_a, args.file_b)
    except GridMismatchError as e:
        logger.error(f"Grid mismatch: {e}")
        return EXIT_GRID_MISMATCH
    except (OSError, ValueError) as e:
        logger.error(f"Cannot compare: {e}")
        return EXIT_ERROR

    print(f"linf: {comparison.linf!r}")
    print(f"l2:   {comparison.l2!r}")
    if args.out:
        write_report(args.out, {'file_a': str(args.file_a), 'file_b': str(args.file_b), **comparison.to_dict()})
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.verbose)
    if args.command == 'run':
        return cmd_run(args)
    return cmd_compare(args)


if __name__ == "__main__":
    try:
        sys.exit(main())
    except KeyboardInterrupt:
        logger.info("Interrupted by user")
        sys.exit(EXIT_ERROR)
