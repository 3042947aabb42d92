"""
Experiment orchestrator with dependency resolution and execution logging.

The registry (``config/experiment_registry.json``) names experiment configs
and the experiments they depend on. ``ExperimentRunner`` loads each config,
runs its command, writes the CSV output and keeps an execution log.
"""

import json
import logging
from collections import defaultdict
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional

from src.cli.commands import CommandResult, default_output, run_command, write_result
from src.data.loaders import ExperimentLoader
from src.utils.exceptions import ConfigError
from src.utils.settings import DEFAULT_SETTINGS, find_project_root

OVERRIDE_KEYS = ('seed', 'tolerance', 'cap', 'output')


class ExperimentRunner:
    """
    Runs registered experiments in dependency order.

    Attributes:
        registry_path (Path): Path to the experiment registry JSON file
        registry (Dict): Loaded registry
        settings (Dict): Application settings
        logger (logging.Logger): Logger instance
        execution_log (List[Dict]): History of execution attempts
        errors (Dict[str, Exception]): Last exception raised per experiment

    Example:
        >>> runner = ExperimentRunner()
        >>> result = runner.execute_experiment('doubling-depth3')
        >>> results = runner.execute_batch(['mhr-zoo', 'cc-zoo'], stop_on_error=False)
    """

    def __init__(self,
                 registry_path: str = 'config/experiment_registry.json',
                 settings: Optional[Dict[str, Any]] = None,
                 logger: Optional[logging.Logger] = None):
        self.logger = logger or self._create_default_logger()
        self.settings = settings or DEFAULT_SETTINGS
        self.project_root = find_project_root()
        self.registry_path = self._resolve(registry_path)
        self.registry = self._load_registry()
        self.loader = ExperimentLoader(
            base_path=self._resolve(self.settings['paths']['experiments']),
            defaults={
                'seed': self.settings['monte_carlo']['seed'],
                'cap': self.settings['caps']['lp_nonzeros'],
            },
            logger=self.logger,
        )
        self.execution_log: List[Dict[str, Any]] = []
        self.errors: Dict[str, Exception] = {}

    def _create_default_logger(self) -> logging.Logger:
        """Create a default logger if none provided."""
        logger = logging.getLogger(__name__)
        if not logger.handlers:
            handler = logging.StreamHandler()
            formatter = logging.Formatter('%(asctime)s - %(levelname)s - %(message)s',
                                          datefmt='%H:%M:%S')
            handler.setFormatter(formatter)
            logger.addHandler(handler)
            logger.setLevel(logging.INFO)
        return logger

    def _resolve(self, path: str) -> Path:
        path = Path(path)
        return path if path.is_absolute() else self.project_root / path

    def _load_registry(self) -> Dict[str, Any]:
        """Load the experiment registry; a missing file gives an empty one."""
        try:
            with open(self.registry_path, 'r', encoding='utf-8') as f:
                registry = json.load(f)
        except FileNotFoundError:
            self.logger.warning(f"⚠️ Registry not found: {self.registry_path}")
            return {'experiments': []}
        except json.JSONDecodeError as e:
            raise ConfigError(f"{self.registry_path}: invalid JSON at line {e.lineno}: {e.msg}") from e
        if not isinstance(registry.get('experiments'), list):
            raise ConfigError(f"{self.registry_path}: expected an 'experiments' list")
        return registry

    def get_experiment_config(self, experiment_id: str) -> Optional[Dict[str, Any]]:
        for experiment in self.registry.get('experiments', []):
            if experiment.get('id') == experiment_id:
                return experiment
        return None

    def list_experiments(self, category: Optional[str] = None,
                         status: Optional[str] = None) -> List[Dict[str, Any]]:
        """
        List registered experiments, optionally filtered.

        Args:
            category: e.g. 'mechanisms', 'duality', 'order-statistics'
            status: e.g. 'active', 'slow'
        """
        experiments = self.registry.get('experiments', [])
        if category:
            experiments = [e for e in experiments if e.get('category') == category]
        if status:
            experiments = [e for e in experiments if e.get('status') == status]
        return experiments

    def execute_experiment(self,
                           experiment_id: str,
                           overrides: Optional[Dict[str, Any]] = None,
                           output_path: Optional[str] = None) -> CommandResult:
        """
        Load, run and write one registered experiment.

        Args:
            experiment_id: Identifier from the registry
            overrides: seed / tolerance / cap / output taking precedence over the
                registry entry and the config file
            output_path: Explicit CSV path. If None, ``output`` from the config or
                ``reports/<name>.csv``.

        Returns:
            The command result. Failed checks are recorded, not raised.

        Raises:
            ConfigError: Unknown experiment or invalid config
            DomainError, SizeLimitError, DivergenceError, SolverError: From the command
        """
        experiment = self.get_experiment_config(experiment_id)
        if not experiment:
            raise ConfigError(f"Experiment '{experiment_id}' not found in registry")
        if experiment.get('status') not in (None, 'active'):
            self.logger.warning(f"⚠️ Experiment '{experiment_id}' status: {experiment.get('status')}")
        if experiment.get('dependencies'):
            self.logger.info(f"📋 Dependencies: {experiment['dependencies']}")
            self._check_dependencies(experiment['dependencies'])

        params = dict(experiment.get('overrides', {}))
        unknown = sorted(set(params) - set(OVERRIDE_KEYS))
        if unknown:
            raise ConfigError(f"{self.registry_path}: {experiment_id}.overrides: unknown keys {unknown}")
        params.update({k: v for k, v in (overrides or {}).items() if v is not None})
        if output_path:
            params['output'] = output_path

        self.logger.info(f"📊 Executing: {experiment.get('name', experiment_id)}")
        self.logger.info(f"   Config: {experiment['config']}")
        start_time = datetime.now()
        try:
            config = self.loader.load(experiment['config']).with_overrides(**params)
            result = run_command(config, self.settings, self.logger)
            written = write_result(result, self._resolve(str(default_output(config, self.settings))), self.logger)
        except Exception as e:
            duration = (datetime.now() - start_time).total_seconds()
            self.logger.error(f"❌ {experiment_id} failed after {duration:.1f}s: {e}")
            self.errors[experiment_id] = e
            self.execution_log.append({
                'experiment_id': experiment_id,
                'status': 'failed',
                'timestamp': datetime.now().isoformat(),
                'duration': duration,
                'error': str(e),
                'error_type': type(e).__name__,
                'parameters': params,
            })
            raise

        duration = (datetime.now() - start_time).total_seconds()
        status = 'success' if result.passed else 'failed'
        marker = '✅' if result.passed else '❌'
        self.logger.info(f"{marker} {experiment_id} {status} in {duration:.1f}s ({result.failures} failed checks)")
        self.execution_log.append({
            'experiment_id': experiment_id,
            'status': status,
            'timestamp': datetime.now().isoformat(),
            'duration': duration,
            'failures': result.failures,
            'output': [str(p) for p in written],
            'parameters': params,
        })
        return result

    def execute_batch(self,
                      experiment_ids: List[str],
                      overrides: Optional[Dict[str, Any]] = None,
                      stop_on_error: bool = True) -> Dict[str, CommandResult]:
        """
        Run several experiments in dependency order.

        Args:
            experiment_ids: Experiments to run; their dependencies run first
            overrides: Applied to every experiment
            stop_on_error: Stop at the first experiment that raises

        Returns:
            Results of the experiments that ran to completion
        """
        execution_order = self._resolve_dependencies(experiment_ids)
        self.logger.info(f"📋 Batch execution plan: {len(execution_order)} experiments")
        self.logger.info(f"   Order: {' → '.join(execution_order)}")

        results: Dict[str, CommandResult] = {}
        failed = []
        for experiment_id in execution_order:
            try:
                results[experiment_id] = self.execute_experiment(experiment_id, overrides)
                if not results[experiment_id].passed:
                    failed.append(experiment_id)
            except Exception as e:
                failed.append(experiment_id)
                self.logger.error(f"❌ Batch error at {experiment_id}: {e}")
                if stop_on_error:
                    self.logger.error("🛑 Stopping batch execution (stop_on_error=True)")
                    break
                self.logger.warning("⚠️ Continuing batch execution despite error")

        successful = sum(1 for r in results.values() if r.passed)
        self.logger.info('=' * 60)
        self.logger.info("📊 Batch Execution Summary")
        self.logger.info('=' * 60)
        self.logger.info(f"✅ Successful: {successful}/{len(execution_order)}")
        if failed:
            self.logger.info(f"❌ Failed: {len(failed)}/{len(execution_order)} - {failed}")
        self.logger.info('=' * 60)
        return results

    def _resolve_dependencies(self, experiment_ids: List[str]) -> List[str]:
        """Depth-first ordering with dependencies first; unknown ids are skipped."""
        ordered: List[str] = []
        visited = set()

        def visit(experiment_id: str, trail: tuple):
            if experiment_id in visited:
                return
            if experiment_id in trail:
                raise ConfigError(f"dependency cycle: {' → '.join(trail + (experiment_id,))}")
            experiment = self.get_experiment_config(experiment_id)
            if not experiment:
                self.logger.warning(f"⚠️ Experiment not found: {experiment_id}")
                return
            for dep in experiment.get('dependencies', []):
                visit(dep, trail + (experiment_id,))
            ordered.append(experiment_id)
            visited.add(experiment_id)

        for experiment_id in experiment_ids:
            visit(experiment_id, ())
        return ordered

    def _check_dependencies(self, dependencies: List[str]) -> None:
        for dep in dependencies:
            if not self.get_experiment_config(dep):
                self.logger.warning(f"⚠️ Dependency not found: {dep}")

    def get_execution_history(self, experiment_id: Optional[str] = None) -> List[Dict[str, Any]]:
        if experiment_id:
            return [e for e in self.execution_log if e['experiment_id'] == experiment_id]
        return self.execution_log

    def get_execution_stats(self) -> Dict[str, Any]:
        """Counts, success rate and mean duration over the execution log."""
        total = len(self.execution_log)
        successful = sum(1 for e in self.execution_log if e['status'] == 'success')
        durations = [e['duration'] for e in self.execution_log if 'duration' in e]

        by_experiment = defaultdict(lambda: {'success': 0, 'failed': 0})
        for entry in self.execution_log:
            by_experiment[entry['experiment_id']][entry['status']] += 1

        return {
            'total_executions': total,
            'successful': successful,
            'failed': total - successful,
            'success_rate': successful / total if total > 0 else 0,
            'average_duration': sum(durations) / len(durations) if durations else 0,
            'by_experiment': dict(by_experiment),
        }

    def save_execution_log(self, output_path: str) -> None:
        output = Path(output_path)
        output.parent.mkdir(parents=True, exist_ok=True)
        with open(output, 'w', encoding='utf-8') as f:
            json.dump({
                'execution_log': self.execution_log,
                'stats': self.get_execution_stats(),
            }, f, indent=2)
        self.logger.info(f"💾 Execution log saved to: {output}")
