"""
Command-line entry point.

Usage:
    python -m src.cli opt-solve --config config/experiments/doubling_depth3.json
    python -m src.cli mhr-verify --config mhr_zoo.json --tol 1e-8 --out reports/mhr.csv
    python -m src.cli reproduce-paper
    python -m src.cli run --all --keep-going

Exit codes: 0 all checks pass, 1 a check failed, 2 usage or config error,
3 domain / size-limit / divergence error, 4 solver error.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import yaml

from src.cli.commands import default_output, run_command, write_result
from src.data.loaders import COMMANDS, ExperimentLoader
from src.orchestration.experiment_runner import ExperimentRunner
from src.utils.exceptions import ConfigError, DivergenceError, DomainError, SizeLimitError, SolverError
from src.utils.logging_setup import setup_logging
from src.utils.settings import load_settings

EXIT_OK = 0
EXIT_CHECKS_FAILED = 1
EXIT_USAGE = 2
EXIT_DOMAIN = 3
EXIT_SOLVER = 4

logger = logging.getLogger(__name__)


def exit_code_for(error: BaseException) -> Optional[int]:
    """Exit code of a package error, None for anything else."""
    # ConfigError subclasses ValueError like DomainError; test it first
    if isinstance(error, ConfigError):
        return EXIT_USAGE
    if isinstance(error, (DomainError, SizeLimitError, DivergenceError)):
        return EXIT_DOMAIN
    if isinstance(error, SolverError):
        return EXIT_SOLVER
    return None


def _positive_float(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError(f"seed must fit in an unsigned 64-bit integer, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--seed', type=_seed, help='Random seed (overrides the config)')
    common.add_argument('--tol', type=_positive_float, help='Check tolerance (overrides the config)')
    common.add_argument('--cap', type=_positive_int, help='LP nonzero cap (overrides the config)')
    common.add_argument('--settings', help='Settings YAML (default: config/config.yml or the example)')
    common.add_argument('--log-level', default=None, choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'])
    common.add_argument('--no-log-file', action='store_true', help='Console logging only')

    parser = argparse.ArgumentParser(
        prog='dynauction',
        description='Dynamic auction revenue, duality certificates and order-statistic checks.',
    )
    subparsers = parser.add_subparsers(dest='command', required=True)

    for command in COMMANDS:
        sub = subparsers.add_parser(command, parents=[common], help=f"Run a {command} experiment config")
        sub.add_argument('--config', required=command != 'reproduce-paper', help='Experiment config (JSON)')
        sub.add_argument('--out', help='Output CSV path (overrides the config)')

    run = subparsers.add_parser('run', parents=[common], help='Run experiments from the registry')
    target = run.add_mutually_exclusive_group(required=True)
    target.add_argument('--experiment', action='append', help='Registry id (repeatable)')
    target.add_argument('--all', action='store_true', help='Every active experiment')
    run.add_argument('--registry', help='Registry JSON (default from settings)')
    run.add_argument('--keep-going', action='store_true', help='Continue past experiments that raise')
    run.add_argument('--execution-log', help='Write the execution log JSON here')
    return parser


def _run_single(args: argparse.Namespace, settings: dict, log: logging.Logger) -> int:
    loader = ExperimentLoader(
        base_path=settings['paths']['experiments'],
        defaults={'seed': settings['monte_carlo']['seed'], 'cap': settings['caps']['lp_nonzeros']},
        logger=log,
    )
    if args.config:
        config = loader.load(args.config)
    else:
        config = loader.from_document({'command': args.command}, where='reproduce-paper')
    if config.command != args.command:
        raise ConfigError(f"{args.config}: command is {config.command!r} but {args.command!r} was requested")

    config = config.with_overrides(seed=args.seed, tolerance=args.tol, cap=args.cap, output=args.out)
    result = run_command(config, settings, log)
    write_result(result, default_output(config, settings), log)
    return EXIT_OK if result.passed else EXIT_CHECKS_FAILED


def _run_registry(args: argparse.Namespace, settings: dict, log: logging.Logger) -> int:
    runner = ExperimentRunner(
        registry_path=args.registry or settings['paths']['registry'],
        settings=settings,
        logger=log,
    )
    ids = args.experiment or [e['id'] for e in runner.list_experiments(status='active')]
    if not ids:
        raise ConfigError(f"{runner.registry_path}: no experiments to run")
    unknown = [i for i in ids if runner.get_experiment_config(i) is None]
    if unknown:
        raise ConfigError(f"{runner.registry_path}: unknown experiment ids {unknown}")

    overrides = {'seed': args.seed, 'tolerance': args.tol, 'cap': args.cap}
    results = runner.execute_batch(ids, overrides, stop_on_error=not args.keep_going)
    if args.execution_log:
        runner.save_execution_log(args.execution_log)

    for error in runner.errors.values():
        code = exit_code_for(error)
        if code is None:
            raise error
    codes = sorted({exit_code_for(e) for e in runner.errors.values()}, reverse=True)
    if codes:
        return codes[0]
    return EXIT_OK if all(r.passed for r in results.values()) else EXIT_CHECKS_FAILED


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        settings = load_settings(args.settings)
    except (OSError, ValueError, yaml.YAMLError) as e:
        print(f"❌ Settings: {e}", file=sys.stderr)
        return EXIT_USAGE

    log_dir = None if args.no_log_file else Path(settings['paths']['logs'])
    log = setup_logging(
        level=args.log_level or settings['logging']['level'],
        log_dir=log_dir,
        prefix=settings['logging']['prefix'],
    )

    try:
        if args.command == 'run':
            return _run_registry(args, settings, log)
        return _run_single(args, settings, log)
    except (ConfigError, DomainError, SizeLimitError, DivergenceError, SolverError) as e:
        code = exit_code_for(e)
        log.error(f"❌ {type(e).__name__}: {e}")
        return code


if __name__ == '__main__':
    sys.exit(main())
