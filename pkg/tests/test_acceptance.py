import inspect
import json
from pathlib import Path

import pytest

from src.cli.commands import ACCEPTANCE_COLUMNS, run_command
from src.data.loaders import ExperimentLoader
from src.validation.acceptance import (
    AcceptanceCheck,
    cc_checks,
    dominance_checks,
    doubling_checks,
    flow_checks,
    lambert_checks,
    nonmonotonicity_checks,
    order_statistic_checks,
    piecewise_checks,
    run_acceptance,
    verifier_checks,
    zoo_checks,
)
from src.validation.mhr_bounds import COUPLING_TRIALS


@pytest.mark.parametrize('relation, value, target, holds', [
    ('>=', 1.0, 1.0, True),
    ('>=', 0.9, 1.0, False),
    ('<=', 1.0 + 1e-7, 1.0, True),
    ('==', 1.0 + 1e-3, 1.0, False),
    ('>', 1.0, 1.0, False),
    ('>', 1.1, 1.0, True),
])
def test_check_relations(relation, value, target, holds):
    assert AcceptanceCheck('group', 'item', value, relation, target).holds is holds


def test_check_rows():
    row = AcceptanceCheck('group', 'item', 2.0, '>=', 1.5).as_row()
    assert list(row) == ACCEPTANCE_COLUMNS
    assert row['margin'] == pytest.approx(0.5)
    assert row['pass'] == 'pass'
    assert AcceptanceCheck('group', 'item', 0.0, '>=', 1.0, expected_fail=True).status == 'expected-fail'
    assert not AcceptanceCheck('group', 'item', 2.0, '>=', 1.0, expected_fail=True).ok


def _all_pass(checks):
    failing = [c.item for c in checks if not c.ok]
    assert not failing, failing


def test_doubling_group():
    checks = doubling_checks(3)
    assert {c.criterion for c in checks} == {'doubling'}
    _all_pass(checks)


def test_small_dominance_group():
    checks = dominance_checks(count=5, seed=3)
    assert len(checks) == 2
    _all_pass(checks)
    assert dominance_checks(count=0) == []


def test_flow_group():
    _all_pass(flow_checks())


def test_verifier_group():
    _all_pass(verifier_checks())


def test_order_statistic_group():
    _all_pass(order_statistic_checks())


def test_small_piecewise_group():
    _all_pass(piecewise_checks(count=50, seed=1))


def test_small_lambert_group():
    _all_pass(lambert_checks(sizes=range(1, 3), stages=(2, 5)))


def test_small_correlation_group():
    checks = nonmonotonicity_checks(levels=range(2, 4))
    assert len(checks) == 8
    _all_pass(checks)


@pytest.mark.slow
def test_zoo_group():
    _all_pass(zoo_checks(coupling_trials=10_000, seed=2))


@pytest.mark.slow
def test_cc_group():
    _all_pass(cc_checks(sizes=(2,), stages=(1, 2)))


@pytest.mark.slow
def test_full_run():
    checks = run_acceptance(random_instances=3, coupling_trials=5_000)
    _all_pass(checks)
    assert {c.criterion for c in checks} >= {'doubling', 'flows', 'verifier', 'correlation', 'lambert'}


@pytest.mark.slow
def test_reproduce_command(settings):
    config = ExperimentLoader().from_document({
        'command': 'reproduce-paper', 'random_instances': 2, 'coupling_trials': 2_000,
    })
    result = run_command(config, settings)
    assert result.passed
    assert list(result.frame.columns) == ACCEPTANCE_COLUMNS
    assert not result.workbook


def test_coupling_trials_agree():
    experiments = Path(__file__).parent.parent / 'config' / 'experiments'
    registry_run = json.loads((experiments / 'mhr_coupling.json').read_text())
    assert registry_run['coupling']['trials'] == COUPLING_TRIALS
    assert ExperimentLoader().load(experiments / 'reproduce.json').params['coupling_trials'] == COUPLING_TRIALS
    assert ExperimentLoader().from_document({'command': 'reproduce-paper'}).params['coupling_trials'] == COUPLING_TRIALS
    assert inspect.signature(run_acceptance).parameters['coupling_trials'].default == COUPLING_TRIALS
    assert inspect.signature(zoo_checks).parameters['coupling_trials'].default == COUPLING_TRIALS
