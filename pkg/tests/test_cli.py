import json

import openpyxl
import pandas as pd
import pytest
import yaml

from src.cli.commands import default_output, run_command, write_result
from src.cli.main import EXIT_CHECKS_FAILED, EXIT_DOMAIN, EXIT_OK, EXIT_USAGE, exit_code_for, main
from src.data.loaders import ExperimentLoader, check_keys, parse_distribution
from src.duality.flows import flow_general
from src.orchestration.experiment_runner import ExperimentRunner
from src.reporting.exporters import ExcelExporter, rows_to_frame, write_csv
from src.utils.exceptions import ConfigError, DomainError, SizeLimitError, SolverError

UNIFORM_DECL = {'kind': 'discrete', 'support': [1, 2], 'probs': [0.5, 0.5], 'name': 'u12'}
TWO_STAGE_INSTANCE = {
    'n': 2,
    'process': {
        'type': 'independent',
        'stages': [
            {'support': [1, 2], 'probs': [0.5, 0.5]},
            {'support': [1, 2], 'probs': [0.5, 0.5]},
        ],
    },
}


def _write_json(path, doc):
    path.write_text(json.dumps(doc), encoding='utf-8')
    return path


@pytest.fixture
def loader(tmp_path):
    return ExperimentLoader(base_path=tmp_path)


@pytest.fixture
def settings_file(tmp_path, settings):
    path = tmp_path / 'settings.yml'
    path.write_text(yaml.safe_dump(settings), encoding='utf-8')
    return path


# ----------------------------------------------------------------------
# Config validation
# ----------------------------------------------------------------------
def test_named_instance_config(loader):
    config = loader.from_document({
        'command': 'opt-solve',
        'named': {'name': 'doubling', 'parameter': 3},
        'seed': 7,
    })
    assert config.command == 'opt-solve'
    assert config.seed == 7
    assert config.params['reference'].instance.m == 2
    assert config.params['verify'] is True
    assert 'expected_first' in config.params['reference'].reference


def test_overrides_win_over_file_values(loader):
    config = loader.from_document({'command': 'dist-stats', 'distribution': UNIFORM_DECL, 'tolerance': 1e-3})
    changed = config.with_overrides(tolerance=1e-9, cap=50)
    assert changed.tolerance == 1e-9
    assert changed.cap == 50
    assert config.tolerance == 1e-3


@pytest.mark.parametrize('doc', [
    {'command': 'solve'},
    {'command': 'dist-stats'},
    {'command': 'dist-stats', 'distribution': UNIFORM_DECL, 'colour': 'red'},
    {'command': 'dist-stats', 'distribution': UNIFORM_DECL, 'seed': True},
    {'command': 'dist-stats', 'distribution': UNIFORM_DECL, 'tolerance': 0},
    {'command': 'dist-stats', 'distribution': UNIFORM_DECL, 'ranks': [0]},
    {'command': 'dist-stats', 'distribution': {'kind': 'gamma', 'shape': 2.0}},
    {'command': 'opt-solve'},
    {'command': 'opt-solve', 'instance': TWO_STAGE_INSTANCE, 'named': {'name': 'doubling', 'parameter': 2}},
    {'command': 'opt-solve', 'named': {'name': 'staircase', 'parameter': 2}},
    {'command': 'opt-solve', 'named': {'name': 'doubling', 'parameter': 0}},
    {'command': 'opt-solve', 'instance': TWO_STAGE_INSTANCE, 'solver': 'interior-point'},
    {'command': 'cc'},
    {'command': 'cc', 'queries': [{'n': 1, 'distribution': {'kind': 'exponential', 'rate': 1.0}}]},
    {'command': 'cc', 'queries': [{'n': 1, 'm': 1, 'alpha': 2.0, 'distribution': {'kind': 'exponential', 'rate': 1.0}}]},
    {'command': 'cc', 'lower_bound': {'n': [1], 'm': [1]}},
    {'command': 'mhr-verify', 'distributions': {'u': UNIFORM_DECL}},
    {'command': 'reproduce-paper', 'random_instances': -1},
])
def test_invalid_configs(loader, doc):
    with pytest.raises(ConfigError):
        loader.from_document(doc)


def test_oversized_named_instance_is_a_size_error(loader):
    with pytest.raises(SizeLimitError):
        loader.from_document({'command': 'opt-solve', 'named': {'name': 'doubling', 'parameter': 9}})


def test_missing_file_and_bad_json(loader, tmp_path):
    with pytest.raises(ConfigError, match='not found'):
        loader.load('absent.json')
    (tmp_path / 'broken.json').write_text('{"command": "cc",\n  "queries": [}', encoding='utf-8')
    with pytest.raises(ConfigError, match='line 2'):
        loader.load('broken.json')


def test_check_keys_rejects_bools_as_numbers():
    check_keys({'a': 1.5}, {'a': (int, float)}, 'x')
    with pytest.raises(ConfigError, match='x.a'):
        check_keys({'a': False}, {'a': (int, float)}, 'x')


def test_parse_distribution_names():
    assert parse_distribution(UNIFORM_DECL, 'd').name == 'u12'
    dist = parse_distribution({'kind': 'exponential', 'rate': 2.0, 'name': 'exp2'}, 'd')
    assert dist.name == 'exp2'
    assert dist.mean() == pytest.approx(0.5, abs=1e-9)


# ----------------------------------------------------------------------
# Output files
# ----------------------------------------------------------------------
def test_csv_format(tmp_path):
    path = write_csv([{'a': 1.0 / 3.0, 'b': 'x'}], tmp_path / 'sub' / 'out.csv')
    assert path.read_bytes() == b'a,b\n0.333333333333,x\n'


def test_rows_to_frame_keeps_column_order():
    frame = rows_to_frame([{'b': 1, 'a': 2}], ['a', 'b'])
    assert list(frame.columns) == ['a', 'b']
    assert list(rows_to_frame([], ['a', 'b']).columns) == ['a', 'b']
    with pytest.raises(KeyError):
        rows_to_frame([{'a': 1}], ['a', 'b'])


def test_workbook_sheets(tmp_path):
    exporter = ExcelExporter(tmp_path / 'book.xlsx')
    exporter.add_sheet(pd.DataFrame({'a': [1, 2]}), 'first')
    exporter.add_sheet(pd.DataFrame({'b': [3]}), 'a-sheet-name-longer-than-excel-allows')
    workbook = openpyxl.load_workbook(exporter.save())
    assert workbook.sheetnames == ['first', 'a-sheet-name-longer-than-excel-']
    assert workbook['first']['A2'].value == 1


# ----------------------------------------------------------------------
# Commands
# ----------------------------------------------------------------------
def test_dist_stats_command(loader, settings):
    config = loader.from_document({
        'command': 'dist-stats', 'distribution': UNIFORM_DECL, 'ranks': [1, 2, 3], 'sizes': [1, 2],
    })
    result = run_command(config, settings)
    assert result.passed
    frame = result.frame
    assert list(frame.columns) == ['dist_id', 'r', 'n', 'expected']
    # rank 3 is skipped for both sizes, rank 2 for n = 1
    assert len(frame) == 3
    row = frame[(frame['r'] == 2) & (frame['n'] == 2)].iloc[0]
    assert row['expected'] == pytest.approx(1.25)
    assert (frame['dist_id'] == 'u12').all()


def test_opt_solve_command_writes_solution(loader, settings):
    config = loader.from_document({
        'command': 'opt-solve', 'name': 'uniform', 'instance': TWO_STAGE_INSTANCE, 'dump_solution': True,
    })
    result = run_command(config, settings)
    assert result.passed
    metrics = dict(zip(result.frame['metric'], result.frame['value']))
    assert 3.0 - 1e-6 <= metrics['objective'] <= 3.25 + 1e-6
    assert metrics['max_violation'] <= 1e-6

    written = write_result(result, default_output(config, settings))
    assert [p.name for p in written] == ['uniform.csv', 'uniform_solution.csv']
    assert all(p.exists() for p in written)


def test_duality_command(loader, settings):
    config = loader.from_document({'command': 'duality', 'instance': TWO_STAGE_INSTANCE})
    result = run_command(config, settings)
    assert result.passed
    assert len(result.frame) == 2
    assert (result.frame['gap'] >= -1e-6).all()


def test_cc_command(loader, settings):
    config = loader.from_document({
        'command': 'cc',
        'queries': [{'n': 1, 'm': 1, 'distribution': {'kind': 'exponential', 'rate': 1.0}, 'dist_id': 'exp1'}],
        'lower_bound': {'n': [1], 'm': [2]},
    })
    result = run_command(config, settings)
    assert result.passed
    assert result.frame.iloc[0]['c_star'] == 3
    assert list(result.extras) == ['crossings']


def test_mhr_verify_command(loader, settings):
    config = loader.from_document({
        'command': 'mhr-verify',
        'zoo': False,
        'sizes': [2],
        'distributions': {'exp1': {'kind': 'exponential', 'rate': 1.0}},
    })
    result = run_command(config, settings)
    assert result.passed
    assert set(result.frame['pass']) == {'pass', 'expected-fail'}


# ----------------------------------------------------------------------
# Entry point
# ----------------------------------------------------------------------
@pytest.mark.parametrize('error, code', [
    (ConfigError('x'), 2),
    (DomainError('x'), 3),
    (SizeLimitError('x'), 3),
    (SolverError('x'), 4),
    (RuntimeError('x'), None),
])
def test_exit_code_mapping(error, code):
    assert exit_code_for(error) == code


def test_main_success_writes_csv(tmp_path, settings_file):
    config = _write_json(tmp_path / 'stats.json', {'command': 'dist-stats', 'distribution': UNIFORM_DECL})
    out = tmp_path / 'stats.csv'
    argv = ['dist-stats', '--config', str(config), '--out', str(out), '--settings', str(settings_file), '--no-log-file']
    assert main(argv) == EXIT_OK
    lines = out.read_text(encoding='utf-8').splitlines()
    assert lines[0] == 'dist_id,r,n,expected'


def test_main_usage_errors(tmp_path, settings_file):
    common = ['--settings', str(settings_file), '--no-log-file']
    assert main(['dist-stats', '--config', str(tmp_path / 'absent.json')] + common) == EXIT_USAGE

    broken = tmp_path / 'broken.json'
    broken.write_text('{"command": ', encoding='utf-8')
    assert main(['dist-stats', '--config', str(broken)] + common) == EXIT_USAGE

    stats = _write_json(tmp_path / 'stats.json', {'command': 'dist-stats', 'distribution': UNIFORM_DECL})
    assert main(['opt-solve', '--config', str(stats)] + common) == EXIT_USAGE

    with pytest.raises(SystemExit) as excinfo:
        main(['opt-solve'])
    assert excinfo.value.code == EXIT_USAGE
    with pytest.raises(SystemExit):
        main(['dist-stats', '--config', str(stats), '--tol', '-1'])


def test_main_cap_violation(tmp_path, settings_file):
    config = _write_json(tmp_path / 'opt.json', {'command': 'opt-solve', 'instance': TWO_STAGE_INSTANCE})
    argv = ['opt-solve', '--config', str(config), '--cap', '10', '--out', str(tmp_path / 'opt.csv'),
            '--settings', str(settings_file), '--no-log-file']
    assert main(argv) == EXIT_DOMAIN
    assert not (tmp_path / 'opt.csv').exists()


def test_main_expected_failures_pass(tmp_path, settings_file):
    mhr = _write_json(tmp_path / 'mhr.json', {
        'command': 'mhr-verify', 'zoo': False, 'sizes': [2], 'necessity': False,
        'counterexample': {'upper': 1e6, 'n': 10},
    })
    out = tmp_path / 'mhr.csv'
    argv = ['mhr-verify', '--config', str(mhr), '--out', str(out), '--settings', str(settings_file), '--no-log-file']
    assert main(argv) == EXIT_OK
    assert 'expected-fail' in out.read_text(encoding='utf-8')


def test_main_broken_flow_fails_the_check(tmp_path, settings_file, two_stage_uniform):
    flow = flow_general(two_stage_uniform, 0).to_document()
    lam = next(e for e in flow['entries'] if e['kind'] == 'lambda')
    lam['value'] *= 2.0
    config = _write_json(tmp_path / 'duality.json', {
        'command': 'duality', 'instance': TWO_STAGE_INSTANCE, 'flow': flow, 'solve_lp': False,
    })
    out = tmp_path / 'duality.csv'
    argv = ['duality', '--config', str(config), '--out', str(out), '--settings', str(settings_file), '--no-log-file']
    assert main(argv) == EXIT_CHECKS_FAILED
    frame = pd.read_csv(out)
    assert len(frame) == 3
    assert frame['lagrangian_bound'].isna().iloc[-1]


# ----------------------------------------------------------------------
# Registry runner
# ----------------------------------------------------------------------
@pytest.fixture
def registry(tmp_path):
    stats = _write_json(tmp_path / 'stats.json', {'command': 'dist-stats', 'name': 'stats', 'distribution': UNIFORM_DECL})
    bad = _write_json(tmp_path / 'bad.json', {'command': 'dist-stats'})
    doc = {'experiments': [
        {'id': 'base', 'config': str(stats), 'status': 'active'},
        {'id': 'derived', 'config': str(stats), 'dependencies': ['base'], 'status': 'active',
         'overrides': {'output': str(tmp_path / 'reports' / 'derived.csv')}},
        {'id': 'broken', 'config': str(bad), 'status': 'active'},
        {'id': 'loop-a', 'config': str(stats), 'dependencies': ['loop-b']},
        {'id': 'loop-b', 'config': str(stats), 'dependencies': ['loop-a']},
        {'id': 'odd-override', 'config': str(stats), 'overrides': {'colour': 'red'}},
    ]}
    return _write_json(tmp_path / 'registry.json', doc)


def test_runner_dependency_order(registry, settings, tmp_path):
    runner = ExperimentRunner(registry_path=str(registry), settings=settings)
    assert runner._resolve_dependencies(['derived']) == ['base', 'derived']
    results = runner.execute_batch(['derived'])
    assert list(results) == ['base', 'derived']
    assert all(r.passed for r in results.values())
    assert (tmp_path / 'reports' / 'stats.csv').exists()
    assert (tmp_path / 'reports' / 'derived.csv').exists()


def test_runner_cycle(registry, settings):
    runner = ExperimentRunner(registry_path=str(registry), settings=settings)
    with pytest.raises(ConfigError, match='cycle'):
        runner.execute_batch(['loop-a'])


def test_runner_records_failures(registry, settings, tmp_path):
    runner = ExperimentRunner(registry_path=str(registry), settings=settings)
    results = runner.execute_batch(['broken', 'base'], stop_on_error=False)
    assert list(results) == ['base']
    assert isinstance(runner.errors['broken'], ConfigError)
    failed = runner.get_execution_history('broken')[0]
    assert failed['status'] == 'failed'
    assert failed['error_type'] == 'ConfigError'

    stats = runner.get_execution_stats()
    assert stats['total_executions'] == 2
    assert stats['success_rate'] == pytest.approx(0.5)

    log_path = tmp_path / 'logs' / 'execution.json'
    runner.save_execution_log(str(log_path))
    assert json.loads(log_path.read_text(encoding='utf-8'))['stats']['failed'] == 1


def test_runner_rejects_unknown_override(registry, settings):
    runner = ExperimentRunner(registry_path=str(registry), settings=settings)
    with pytest.raises(ConfigError, match='overrides'):
        runner.execute_experiment('odd-override')
    with pytest.raises(ConfigError, match='not found'):
        runner.execute_experiment('missing')


def test_main_runs_registry(registry, settings_file, tmp_path):
    argv = ['run', '--experiment', 'derived', '--registry', str(registry),
            '--execution-log', str(tmp_path / 'run.json'), '--settings', str(settings_file), '--no-log-file']
    assert main(argv) == EXIT_OK
    assert (tmp_path / 'run.json').exists()
    argv = ['run', '--experiment', 'broken', '--registry', str(registry),
            '--settings', str(settings_file), '--no-log-file']
    assert main(argv) == EXIT_USAGE
