"""
Experiment configuration loading and validation.

An experiment config is one JSON document naming a command plus that
command's sections. Validation happens before anything runs: unknown keys,
wrong types and bad declarations raise ``ConfigError`` with the JSON path of
the offending field (and line/column for malformed JSON).
"""

import dataclasses
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

from src.auctions.instances import (
    ReferenceInstance,
    doubling_instance,
    correlation_helps_instance,
    correlation_hurts_instance,
)
from src.distributions.continuous import KINDS, ContinuousDist, make_continuous
from src.distributions.discrete import DiscreteDist
from src.duality.flows import flow_from_document
from src.mechanisms.process import IR_MODES, DynamicInstance
from src.utils.exceptions import ConfigError, DomainError, SizeLimitError
from src.validation.mhr_bounds import COUPLING_TRIALS

COMMANDS = ('dist-stats', 'opt-solve', 'duality', 'cc', 'mhr-verify', 'reproduce-paper')

COMMON_KEYS: Dict[str, tuple] = {
    'command': (str,),
    'name': (str,),
    'description': (str,),
    'seed': (int,),
    'tolerance': (int, float),
    'cap': (int,),
    'output': (str,),
}

COMMAND_KEYS: Dict[str, Dict[str, tuple]] = {
    'dist-stats': {
        'distribution': (dict,),
        'ranks': (list,),
        'sizes': (list,),
        'monte_carlo_trials': (int,),
    },
    'opt-solve': {
        'instance': (dict,),
        'named': (dict,),
        'ir_mode': (str,),
        'solver': (str,),
        'dump_solution': (bool,),
        'verify': (bool,),
    },
    'duality': {
        'instance': (dict,),
        'named': (dict,),
        'flow': (dict,),
        'solve_lp': (bool,),
    },
    'cc': {
        'queries': (list,),
        'lower_bound': (dict,),
    },
    'mhr-verify': {
        'zoo': (bool,),
        'sizes': (list,),
        'distributions': (dict,),
        'necessity': (bool,),
        'chain': (bool,),
        'spacing': (bool,),
        'counterexample': (dict,),
        'piecewise_batch': (dict,),
        'coupling': (dict,),
    },
    'reproduce-paper': {
        'random_instances': (int,),
        'coupling_trials': (int,),
        'workbook': (bool,),
    },
}

NAMED_INSTANCES = ('doubling', 'correlation-helps', 'correlation-hurts')
BENCHMARKS = ('welfare', 'duality-min-j', 'lp-opt', 'custom')

QUERY_KEYS = {
    'distribution': (dict,),
    'distributions': (list,),
    'm': (int,),
    'n': (int,),
    'alpha': (int, float),
    'benchmark': (str,),
    'benchmark_value': (int, float),
    'cap_multiplier': (int,),
    'dist_id': (str,),
    'named': (dict,),
}
LOWER_BOUND_KEYS = {
    'n': (list,),
    'm': (list,),
    'upper': (int, float),
    'equal_revenue_upper': (int, float),
}
COUPLING_KEYS = {'sizes': (list,), 'trials': (int,), 'distributions': (list,)}
BATCH_KEYS = {'count': (int,), 'seed': (int,)}
COUNTEREXAMPLE_KEYS = {'upper': (int, float), 'n': (int,)}
NAMED_KEYS = {'name': (str,), 'parameter': (int,), 'correlated': (bool,), 'n': (int,), 'ir_mode': (str,)}


@dataclass
class ExperimentConfig:
    """
    A validated experiment.

    Attributes:
        command: One of ``COMMANDS``
        params: Command sections, already parsed where they declare objects
            (distributions, instances)
        seed: Random seed for Monte Carlo parts
        tolerance: Check tolerance
        cap: LP nonzero cap
        output: Output CSV path (None means the command's default)
        name: Display name
        source: File the config was read from
    """

    command: str
    params: Dict[str, Any] = field(default_factory=dict)
    seed: int = 20240607
    tolerance: float = 1e-6
    cap: int = 500_000
    output: Optional[str] = None
    name: str = ''
    source: Optional[Path] = None

    def with_overrides(self,
                       seed: Optional[int] = None,
                       tolerance: Optional[float] = None,
                       cap: Optional[int] = None,
                       output: Optional[str] = None) -> 'ExperimentConfig':
        """Copy with command-line flags applied on top of the file values."""
        changes = {}
        if seed is not None:
            changes['seed'] = seed
        if tolerance is not None:
            changes['tolerance'] = tolerance
        if cap is not None:
            changes['cap'] = cap
        if output is not None:
            changes['output'] = output
        return dataclasses.replace(self, **changes)


# ----------------------------------------------------------------------
# Field helpers
# ----------------------------------------------------------------------
def _type_name(types: tuple) -> str:
    names = {dict: 'an object', list: 'a list', str: 'a string', int: 'an integer', float: 'a number', bool: 'true/false'}
    return ' or '.join(names.get(t, t.__name__) for t in types)


def check_keys(doc: Any, schema: Mapping[str, tuple], where: str, required: Tuple[str, ...] = ()) -> None:
    """
    Reject unknown keys, missing required keys and wrongly typed values.

    Booleans are not accepted where numbers are expected.

    Raises:
        ConfigError: Naming the offending path
    """
    if not isinstance(doc, Mapping):
        raise ConfigError(f"{where}: expected an object")
    unknown = sorted(set(doc) - set(schema))
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    for key in required:
        if key not in doc:
            raise ConfigError(f"{where}.{key}: required field missing")
    for key, value in doc.items():
        types = schema[key]
        if isinstance(value, bool) and bool not in types:
            raise ConfigError(f"{where}.{key}: expected {_type_name(types)}, got {value!r}")
        if not isinstance(value, types):
            raise ConfigError(f"{where}.{key}: expected {_type_name(types)}, got {value!r}")


def _int_list(values: Any, where: str, minimum: int = 1) -> List[int]:
    if not isinstance(values, list) or not values:
        raise ConfigError(f"{where}: expected a non-empty list of integers")
    for i, v in enumerate(values):
        if isinstance(v, bool) or not isinstance(v, int) or v < minimum:
            raise ConfigError(f"{where}[{i}]: expected an integer ≥ {minimum}, got {v!r}")
    return list(values)


def parse_distribution(decl: Any, where: str) -> Union[DiscreteDist, ContinuousDist]:
    """
    Build a distribution from ``{"kind": ..., ...}``.

    ``discrete`` takes ``support`` and ``probs``; continuous kinds take the
    factory's keyword parameters (``base`` selects the truncated family).

    Raises:
        ConfigError: For unknown kinds or parameters the factory rejects
    """
    if not isinstance(decl, Mapping):
        raise ConfigError(f"{where}: expected an object")
    params = dict(decl)
    kind = params.pop('kind', None)
    name = params.pop('name', '')
    if not isinstance(name, str):
        raise ConfigError(f"{where}.name: expected a string")
    if kind == 'discrete':
        check_keys(params, {'support': (list,), 'probs': (list,)}, where, required=('support', 'probs'))
        try:
            return DiscreteDist(tuple(params['support']), tuple(params['probs']), name=name)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"{where}: {e}") from e
    if kind not in KINDS:
        raise ConfigError(f"{where}.kind: expected 'discrete' or one of {KINDS}, got {kind!r}")
    for key, value in params.items():
        if key == 'base':
            continue
        if isinstance(value, bool) or not isinstance(value, (int, float, list)):
            raise ConfigError(f"{where}.{key}: expected a number, got {value!r}")
    try:
        dist = make_continuous(kind, **params)
    except (TypeError, KeyError) as e:
        raise ConfigError(f"{where}: bad parameters for {kind}: {e}") from e
    except DomainError as e:
        raise ConfigError(f"{where}: {e}") from e
    return dataclasses.replace(dist, name=name) if name else dist


def parse_named_instance(decl: Any, where: str) -> ReferenceInstance:
    """
    ``{"name": "doubling" | "correlation-helps" | "correlation-hurts",
    "parameter": int, "correlated": bool, "n": int, "ir_mode": str}``.

    Raises:
        ConfigError: On bad fields
        SizeLimitError: When the parameter exceeds a construction cap
    """
    check_keys(decl, NAMED_KEYS, where, required=('name', 'parameter'))
    name = decl['name']
    if name not in NAMED_INSTANCES:
        raise ConfigError(f"{where}.name: expected one of {NAMED_INSTANCES}, got {name!r}")
    parameter = decl['parameter']
    correlated = decl.get('correlated', True)
    try:
        if name == 'doubling':
            reference = doubling_instance(parameter)
        elif name == 'correlation-helps':
            reference = correlation_helps_instance(parameter, correlated)
        else:
            reference = correlation_hurts_instance(parameter, correlated)
    except SizeLimitError:
        raise
    except DomainError as e:
        raise ConfigError(f"{where}.parameter: {e}") from e

    instance = reference.instance
    if 'n' in decl:
        if decl['n'] < 1:
            raise ConfigError(f"{where}.n: expected a positive integer")
        instance = instance.with_buyers(decl['n'])
    if 'ir_mode' in decl:
        if decl['ir_mode'] not in IR_MODES:
            raise ConfigError(f"{where}.ir_mode: expected one of {IR_MODES}")
        instance = instance.with_ir_mode(decl['ir_mode'])
    return dataclasses.replace(reference, instance=instance)


def parse_instance_section(params: Mapping[str, Any], where: str) -> ReferenceInstance:
    """Exactly one of ``instance`` (a document) or ``named`` must be present."""
    has_doc, has_named = 'instance' in params, 'named' in params
    if has_doc == has_named:
        raise ConfigError(f"{where}: give exactly one of 'instance' or 'named'")
    if has_named:
        return parse_named_instance(params['named'], f"{where}.named")
    return ReferenceInstance(DynamicInstance.from_document(params['instance'], f"{where}.instance"))


class ExperimentLoader:
    """
    Read and validate experiment configs.

    Attributes:
        base_path (Path): Directory relative config paths are resolved against
        logger (logging.Logger): Logger instance

    Example:
        >>> loader = ExperimentLoader(base_path='config/experiments')
        >>> config = loader.load('doubling_depth3.json')
        >>> config.command
        'opt-solve'
    """

    def __init__(self,
                 base_path: Union[str, Path] = '.',
                 defaults: Optional[Mapping[str, Any]] = None,
                 logger: Optional[logging.Logger] = None):
        self.base_path = Path(base_path)
        self.defaults = {'seed': 20240607, 'tolerance': 1e-6, 'cap': 500_000, **(defaults or {})}
        self.logger = logger or self._create_default_logger()

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

    def resolve(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        return path if path.is_absolute() or path.exists() else self.base_path / path

    def load(self, path: Union[str, Path]) -> ExperimentConfig:
        """
        Read a JSON config file and validate it.

        Raises:
            ConfigError: Missing file, malformed JSON (with line and column),
                or an invalid field
        """
        config_path = self.resolve(path)
        if not config_path.exists():
            raise ConfigError(f"config file not found: {config_path}")
        text = config_path.read_text(encoding='utf-8')
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{config_path}: invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}") from e
        config = self.from_document(doc, where=config_path.name)
        config.source = config_path
        self.logger.debug(f"✓ Loaded {config.command} config from {config_path}")
        return config

    def from_document(self, doc: Any, where: str = 'config') -> ExperimentConfig:
        """
        Validate a config document already parsed from JSON.

        Raises:
            ConfigError: Naming the offending field path
        """
        if not isinstance(doc, Mapping):
            raise ConfigError(f"{where}: the config must be a JSON object")
        command = doc.get('command')
        if command not in COMMANDS:
            raise ConfigError(f"{where}.command: expected one of {COMMANDS}, got {command!r}")
        schema = {**COMMON_KEYS, **COMMAND_KEYS[command]}
        check_keys(doc, schema, where)

        common = {key: doc[key] for key in COMMON_KEYS if key in doc and key != 'command'}
        if 'tolerance' in common and not common['tolerance'] > 0:
            raise ConfigError(f"{where}.tolerance: must be positive")
        if 'cap' in common and common['cap'] < 1:
            raise ConfigError(f"{where}.cap: must be positive")
        if 'seed' in common and common['seed'] < 0:
            raise ConfigError(f"{where}.seed: must be non-negative")

        sections = {key: doc[key] for key in COMMAND_KEYS[command] if key in doc}
        params = getattr(self, f"_parse_{command.replace('-', '_')}")(sections, where)
        return ExperimentConfig(
            command=command,
            params=params,
            seed=common.get('seed', self.defaults['seed']),
            tolerance=float(common.get('tolerance', self.defaults['tolerance'])),
            cap=common.get('cap', self.defaults['cap']),
            output=common.get('output'),
            name=common.get('name', ''),
        )

    # ------------------------------------------------------------------
    # Per-command sections
    # ------------------------------------------------------------------
    def _parse_dist_stats(self, sections: Dict[str, Any], where: str) -> Dict[str, Any]:
        if 'distribution' not in sections:
            raise ConfigError(f"{where}.distribution: required field missing")
        return {
            'distribution': parse_distribution(sections['distribution'], f"{where}.distribution"),
            'ranks': _int_list(sections.get('ranks', [1, 2]), f"{where}.ranks"),
            'sizes': _int_list(sections.get('sizes', [1, 2, 3, 4]), f"{where}.sizes"),
            'monte_carlo_trials': sections.get('monte_carlo_trials', 0),
        }

    def _parse_opt_solve(self, sections: Dict[str, Any], where: str) -> Dict[str, Any]:
        reference = parse_instance_section(sections, where)
        ir_mode = sections.get('ir_mode')
        if ir_mode is not None:
            if ir_mode not in IR_MODES:
                raise ConfigError(f"{where}.ir_mode: expected one of {IR_MODES}, got {ir_mode!r}")
            reference = dataclasses.replace(reference, instance=reference.instance.with_ir_mode(ir_mode))
        solver = sections.get('solver')
        if solver is not None and solver not in ('highs', 'bland'):
            raise ConfigError(f"{where}.solver: expected 'highs' or 'bland', got {solver!r}")
        return {
            'reference': reference,
            'solver': solver,
            'dump_solution': sections.get('dump_solution', False),
            'verify': sections.get('verify', True),
        }

    def _parse_duality(self, sections: Dict[str, Any], where: str) -> Dict[str, Any]:
        params = {
            'reference': parse_instance_section(sections, where),
            'solve_lp': sections.get('solve_lp', True),
            'flow': None,
        }
        if 'flow' in sections:
            params['flow'] = flow_from_document(sections['flow'], f"{where}.flow")
        return params

    def _parse_cc(self, sections: Dict[str, Any], where: str) -> Dict[str, Any]:
        if not sections:
            raise ConfigError(f"{where}: give 'queries', 'lower_bound' or both")
        queries = []
        for i, query in enumerate(sections.get('queries', [])):
            queries.append(self._parse_query(query, f"{where}.queries[{i}]"))
        lower_bound = None
        if 'lower_bound' in sections:
            path = f"{where}.lower_bound"
            section = sections['lower_bound']
            check_keys(section, LOWER_BOUND_KEYS, path, required=('n', 'm'))
            lower_bound = {
                'n': _int_list(section['n'], f"{path}.n"),
                'm': _int_list(section['m'], f"{path}.m", minimum=2),
                'upper': float(section.get('upper', 40.0)),
                'equal_revenue_upper': float(section.get('equal_revenue_upper', 1e8)),
            }
        return {'queries': queries, 'lower_bound': lower_bound}

    def _parse_query(self, query: Any, where: str) -> Dict[str, Any]:
        check_keys(query, QUERY_KEYS, where, required=('n',))
        sources = [key for key in ('distribution', 'distributions', 'named') if key in query]
        if len(sources) != 1:
            raise ConfigError(f"{where}: give exactly one of 'distribution', 'distributions' or 'named'")
        parsed: Dict[str, Any] = {
            'n': query['n'],
            'alpha': float(query.get('alpha', 1.0)),
            'benchmark': query.get('benchmark', 'welfare'),
            'benchmark_value': query.get('benchmark_value'),
            'cap_multiplier': query.get('cap_multiplier'),
            'dist_id': query.get('dist_id', ''),
            'instance': None,
        }
        if query['n'] < 1:
            raise ConfigError(f"{where}.n: expected a positive integer")
        if not 0 < parsed['alpha'] <= 1:
            raise ConfigError(f"{where}.alpha: must be in (0, 1], got {parsed['alpha']}")
        if parsed['benchmark'] not in BENCHMARKS:
            raise ConfigError(f"{where}.benchmark: expected one of {BENCHMARKS}, got {parsed['benchmark']!r}")
        if parsed['benchmark'] == 'custom' and parsed['benchmark_value'] is None:
            raise ConfigError(f"{where}.benchmark_value: required for the custom benchmark")

        if 'distribution' in query:
            if 'm' not in query or query['m'] < 1:
                raise ConfigError(f"{where}.m: a single distribution needs a positive stage count")
            dist = parse_distribution(query['distribution'], f"{where}.distribution")
            parsed['marginals'] = [dist] * query['m']
        elif 'distributions' in query:
            if not query['distributions']:
                raise ConfigError(f"{where}.distributions: expected a non-empty list")
            parsed['marginals'] = [
                parse_distribution(d, f"{where}.distributions[{i}]") for i, d in enumerate(query['distributions'])
            ]
        else:
            reference = parse_named_instance(query['named'], f"{where}.named")
            parsed['instance'] = reference.instance.with_buyers(query['n'])
            parsed['marginals'] = reference.instance.marginals()
        if 'm' in query and len(parsed['marginals']) != query['m']:
            raise ConfigError(f"{where}.m: declared {query['m']} stages, got {len(parsed['marginals'])}")
        if not parsed['dist_id']:
            parsed['dist_id'] = getattr(parsed['marginals'][0], 'name', '') or parsed['marginals'][0].describe()
        return parsed

    def _parse_mhr_verify(self, sections: Dict[str, Any], where: str) -> Dict[str, Any]:
        params: Dict[str, Any] = {
            'zoo': sections.get('zoo', True),
            'sizes': _int_list(sections.get('sizes', list(range(1, 9))), f"{where}.sizes"),
            'necessity': sections.get('necessity', True),
            'chain': sections.get('chain', False),
            'spacing': sections.get('spacing', False),
            'distributions': {},
            'counterexample': None,
            'piecewise_batch': None,
            'coupling': None,
        }
        for dist_id, decl in sections.get('distributions', {}).items():
            dist = parse_distribution(decl, f"{where}.distributions.{dist_id}")
            if not isinstance(dist, ContinuousDist):
                raise ConfigError(f"{where}.distributions.{dist_id}: the bounds are checked on continuous laws")
            params['distributions'][dist_id] = dist
        if 'counterexample' in sections:
            path = f"{where}.counterexample"
            check_keys(sections['counterexample'], COUNTEREXAMPLE_KEYS, path)
            params['counterexample'] = {
                'upper': float(sections['counterexample'].get('upper', 1e6)),
                'n': sections['counterexample'].get('n', 10),
            }
        if 'piecewise_batch' in sections:
            path = f"{where}.piecewise_batch"
            check_keys(sections['piecewise_batch'], BATCH_KEYS, path)
            params['piecewise_batch'] = {
                'count': sections['piecewise_batch'].get('count', 1000),
                'seed': sections['piecewise_batch'].get('seed'),
            }
        if 'coupling' in sections:
            path = f"{where}.coupling"
            check_keys(sections['coupling'], COUPLING_KEYS, path)
            params['coupling'] = {
                'sizes': _int_list(sections['coupling'].get('sizes', [1, 2]), f"{path}.sizes"),
                'trials': sections['coupling'].get('trials'),
                'distributions': sections['coupling'].get('distributions'),
            }
        return params

    def _parse_reproduce_paper(self, sections: Dict[str, Any], where: str) -> Dict[str, Any]:
        random_instances = sections.get('random_instances', 200)
        if random_instances < 0:
            raise ConfigError(f"{where}.random_instances: must be non-negative")
        return {
            'random_instances': random_instances,
            'coupling_trials': sections.get('coupling_trials', COUPLING_TRIALS),
            'workbook': sections.get('workbook', False),
        }


def load_experiment(path: Union[str, Path], logger: Optional[logging.Logger] = None) -> ExperimentConfig:
    """Shortcut for ``ExperimentLoader().load(path)``."""
    return ExperimentLoader(logger=logger).load(path)
