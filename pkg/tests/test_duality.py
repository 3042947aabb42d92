import pytest

from src.auctions.instances import correlation_helps_instance
from src.auctions.myerson import myerson_revenue
from src.distributions.discrete import DiscreteDist
from src.duality.certificates import (
    best_flow,
    check_conservation,
    conditional_stage_bound,
    duality_reports,
    induced_virtuals,
    lagrangian_bound,
    stage_bound,
    min_stage_bound,
)
from src.duality.flows import (
    FlowSolution,
    check_dominance,
    flow_correlated_dominance,
    flow_expectation_myerson,
    flow_general,
    flow_myerson_expectation,
)
from src.mechanisms.lp_builder import build_lp
from src.mechanisms.process import DynamicInstance, ValueProcess
from src.mechanisms.solver import solve_lp
from src.utils.exceptions import ConfigError, DomainError

RESIDUAL_TOL = 1e-9


def _opt(instance):
    return solve_lp(build_lp(instance)).objective


def test_two_stage_uniform_flows(two_stage_uniform):
    reports = duality_reports(two_stage_uniform)
    assert [r.stage for r in reports] == [0, 1]
    opt = _opt(two_stage_uniform)
    for report in reports:
        assert report.residual <= RESIDUAL_TOL
        assert report.min_multiplier >= 0
        # Mye[X_j] + E[max] of the other stage = 1.5 + 1.75
        assert report.bound == pytest.approx(3.25, abs=1e-9)
        assert report.closed_form == pytest.approx(3.25)
        assert report.bound >= opt - 1e-7
    assert min_stage_bound(two_stage_uniform)[1] == pytest.approx(3.25)


def test_report_rows(two_stage_uniform):
    row = duality_reports(two_stage_uniform)[1].as_dict()
    assert row['myerson_stage'] == 2
    assert row['flow'] == 'general-stage-2'
    assert set(row) == {'myerson_stage', 'flow', 'residual', 'min_multiplier', 'lagrangian_bound', 'closed_form'}


def test_single_buyer_two_stage_flows(doubling_depth3):
    instance = doubling_depth3.instance
    reference = doubling_depth3.reference
    lp = build_lp(instance)
    late = flow_expectation_myerson(instance)
    early = flow_myerson_expectation(instance)
    assert lagrangian_bound(instance, late, lp) == pytest.approx(
        reference['expected_first'] + reference['myerson_second'], abs=1e-9)
    assert lagrangian_bound(instance, early, lp) == pytest.approx(
        reference['myerson_first'] + reference['expected_second'], abs=1e-9)
    assert stage_bound(instance, 1) == pytest.approx(reference['expected_first'] + reference['myerson_second'])


def test_best_flow_picks_the_smaller_bound(doubling_depth3):
    instance = doubling_depth3.instance
    j, flow, bound = best_flow(instance)
    assert j == 1
    assert flow.stage == 1
    assert bound == pytest.approx(min(stage_bound(instance, 0), stage_bound(instance, 1)), abs=1e-9)
    assert bound >= _opt(instance) - 1e-7


def test_two_stage_flows_need_one_buyer(two_stage_uniform):
    with pytest.raises(DomainError):
        flow_expectation_myerson(two_stage_uniform)


def test_general_flow_refuses_irregular_stage():
    irregular = DiscreteDist((1.0, 2.0, 3.0), (0.5, 0.1, 0.4))
    instance = DynamicInstance(2, ValueProcess.independent_stages([irregular]))
    with pytest.raises(DomainError):
        flow_general(instance, 0)
    with pytest.raises(DomainError):
        flow_general(instance, 1)


def test_induced_virtual_values_match_myerson(uniform12):
    instance = DynamicInstance(1, ValueProcess.independent_stages([uniform12]))
    table = induced_virtuals(instance, flow_general(instance, 0))
    assert table.at_values((1.0,)) == pytest.approx(0.0)
    assert table.at_values((2.0,)) == pytest.approx(2.0)
    assert table.single_buyer_bound() == pytest.approx(myerson_revenue(uniform12, 1))


def test_broken_flow_is_not_useful(two_stage_uniform):
    flow = flow_general(two_stage_uniform, 0)
    key = next(iter(flow.lam))
    flow.lam[key] *= 2.0
    assert check_conservation(two_stage_uniform, flow) > 1e-3
    with pytest.raises(DomainError):
        lagrangian_bound(two_stage_uniform, flow)


def test_flow_for_other_instance(two_stage_uniform):
    flow = flow_general(two_stage_uniform, 0)
    with pytest.raises(DomainError):
        check_conservation(two_stage_uniform.with_buyers(1), flow)


def test_flow_document_round_trip(two_stage_uniform):
    flow = flow_general(two_stage_uniform, 1)
    restored = FlowSolution.from_document(flow.to_document())
    assert restored.stage == 1
    assert restored.lam == pytest.approx(flow.lam)
    assert check_conservation(two_stage_uniform, restored) <= RESIDUAL_TOL


@pytest.mark.parametrize('doc', [
    {'supports': [[1.0, 2.0]], 'entries': [{'kind': 'kappa', 'stage': 1, 'history': [3.0], 'value': 1.0}]},
    {'supports': [[1.0, 2.0]], 'entries': [{'kind': 'mu', 'stage': 1, 'history': [1.0], 'value': 1.0}]},
    {'supports': [[1.0, 2.0]], 'entries': [{'kind': 'kappa', 'stage': 2, 'history': [1.0], 'value': 1.0}]},
    {'supports': [[1.0, 2.0]], 'weights': []},
])
def test_flow_document_rejects(doc):
    with pytest.raises(ConfigError):
        FlowSolution.from_document(doc)


# ----------------------------------------------------------------------
# Correlated stages
# ----------------------------------------------------------------------
def test_positively_correlated_flows(correlation_hurts):
    instance = correlation_hurts.instance
    assert check_dominance(instance)
    opt = _opt(instance)
    for report in duality_reports(instance):
        assert report.residual <= RESIDUAL_TOL
        assert report.min_multiplier >= -1e-12
        assert report.bound <= report.closed_form + 1e-9
        assert report.bound >= opt - 1e-7
    assert conditional_stage_bound(instance, 0) == pytest.approx(
        myerson_revenue(instance.marginals()[0], 1) + instance.marginals()[1].mean())


def test_negative_correlation_has_no_dominance_flow():
    instance = correlation_helps_instance(2).instance
    check = check_dominance(instance)
    assert not check
    assert check.witness[0] == 2
    with pytest.raises(DomainError):
        flow_correlated_dominance(instance)


def test_dominance_flow_is_single_buyer(correlation_hurts):
    with pytest.raises(DomainError):
        flow_correlated_dominance(correlation_hurts.instance.with_buyers(2))
