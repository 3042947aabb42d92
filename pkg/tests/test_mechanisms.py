import json

import numpy as np
import pytest

from src.auctions.instances import correlation_helps_instance, correlation_hurts_instance
from src.auctions.myerson import myerson_revenue
from src.distributions.discrete import DiscreteDist
from src.mechanisms.constructions import (
    ex_ante_surplus_mechanism,
    pay_your_report_mechanism,
    menu_mechanism,
    posted_price_mechanism,
    report_price_mechanism,
    second_price_mechanism,
    stagewise_myerson_mechanism,
)
from src.mechanisms.history import HistoryIndex
from src.mechanisms.lp_builder import build_lp
from src.mechanisms.process import DynamicInstance, ValueProcess
from src.mechanisms.simplex import bland_simplex
from src.mechanisms.solver import solve_lp
from src.mechanisms.verification import row_values, verify_mechanism, welfare_bound
from src.utils.exceptions import ConfigError, DomainError, SizeLimitError, SolverError

TOL = 1e-6


def _solve(instance, method='highs', ir_mode=None):
    lp = build_lp(instance, ir_mode=ir_mode)
    return lp, solve_lp(lp, method=method)


# ----------------------------------------------------------------------
# Value processes and instances
# ----------------------------------------------------------------------
def test_correlated_process_conditionals():
    first = DiscreteDist.uniform([1.0, 2.0])
    process = ValueProcess.correlated(first, {
        (1.0,): DiscreteDist.point_mass(3.0),
        (2.0,): DiscreteDist.uniform([3.0, 5.0]),
    })
    assert process.m == 2
    assert not process.independent
    assert process.supports[1] == (3.0, 5.0)
    np.testing.assert_allclose(process.conditional((0,)), [1.0, 0.0])
    assert process.marginal(1).probs == pytest.approx((0.75, 0.25))


def test_correlated_process_needs_every_reachable_history():
    first = DiscreteDist.uniform([1.0, 2.0])
    with pytest.raises(DomainError):
        ValueProcess.correlated(first, {(1.0,): DiscreteDist.point_mass(3.0)})


def test_instance_document_round_trip(correlation_hurts):
    instance = correlation_hurts.instance
    restored = DynamicInstance.from_json(instance.to_json())
    assert restored.n == instance.n
    assert restored.process.supports == instance.process.supports
    assert restored.marginals()[1].probs == pytest.approx(instance.marginals()[1].probs)


@pytest.mark.parametrize('doc', [
    {'n': 0, 'process': {}},
    {'n': 1},
    {'n': 1, 'ir_mode': 'interim', 'process': {'type': 'independent', 'stages': [{'support': [1], 'probs': [1]}]}},
    {'n': 1, 'colour': 'red', 'process': {'type': 'independent', 'stages': [{'support': [1], 'probs': [1]}]}},
])
def test_instance_document_rejects(doc):
    with pytest.raises(ConfigError):
        DynamicInstance.from_document(doc)


def test_instance_needs_a_buyer(uniform12):
    with pytest.raises(DomainError):
        DynamicInstance(0, ValueProcess.independent_stages([uniform12]))


# ----------------------------------------------------------------------
# History indexing
# ----------------------------------------------------------------------
def test_history_index_counts(two_stage_uniform):
    index = HistoryIndex(two_stage_uniform)
    assert index.per_buyer == [2, 4]
    assert index.profiles == [4, 16]
    assert index.x_count == 40
    assert index.column_count == 80
    assert index.history_prob(1).sum() == pytest.approx(1.0)
    assert index.profile_prob(1).sum() == pytest.approx(1.0)


def test_history_codes_are_contiguous(two_stage_uniform):
    index = HistoryIndex(two_stage_uniform)
    assert index.decode(1, 3) == (1, 1)
    assert index.encode((1, 0)) == 2
    assert index.descendants(0, 1, 1) == (2, 4)
    assert index.profile_histories(1, index.profile_code(1, (3, 2))) == (3, 2)


# ----------------------------------------------------------------------
# LP optimum
# ----------------------------------------------------------------------
def test_single_stage_lp_is_myerson(uniform12):
    for n in (1, 2):
        instance = DynamicInstance(n, ValueProcess.independent_stages([uniform12]))
        _, solution = _solve(instance)
        assert solution.objective == pytest.approx(myerson_revenue(uniform12, n), abs=TOL)


def test_point_mass_stages_extract_values():
    stages = [DiscreteDist.point_mass(1.0), DiscreteDist.point_mass(3.0)]
    instance = DynamicInstance(2, ValueProcess.independent_stages(stages))
    _, solution = _solve(instance)
    assert solution.objective == pytest.approx(4.0, abs=TOL)


def test_two_stage_uniform_bounds(two_stage_uniform):
    lp, solution = _solve(two_stage_uniform)
    assert solution.label == 'PIC-OPT'
    # stagewise Myerson below, best Lagrangian bound above
    assert solution.objective >= 3.0 - TOL
    assert solution.objective <= 3.25 + TOL
    assert solution.objective <= welfare_bound(two_stage_uniform) + TOL
    assert solution.expected_revenue() == pytest.approx(solution.objective, abs=TOL)
    assert verify_mechanism(two_stage_uniform, solution, lp).passed(TOL)


def test_bland_agrees_with_highs(two_stage_uniform):
    _, highs = _solve(two_stage_uniform, 'highs')
    lp, bland = _solve(two_stage_uniform, 'bland')
    assert bland.objective == pytest.approx(highs.objective, abs=TOL)
    assert verify_mechanism(two_stage_uniform, bland, lp).passed(TOL)


def test_ex_ante_relaxation_is_weakly_better(two_stage_uniform):
    _, ex_post = _solve(two_stage_uniform)
    _, ex_ante = _solve(two_stage_uniform, ir_mode='ex-ante')
    assert ex_ante.objective >= ex_post.objective - TOL
    assert ex_ante.objective <= welfare_bound(two_stage_uniform) + TOL


def test_doubling_beats_the_static_optimum(doubling_depth3):
    lp, solution = _solve(doubling_depth3.instance)
    assert solution.objective >= doubling_depth3.reference['expected_first'] - TOL
    assert solution.objective >= doubling_depth3.reference['static_total'] - TOL
    assert verify_mechanism(doubling_depth3.instance, solution, lp).passed(TOL)


def test_correlation_hurts_optimum(correlation_hurts):
    _, solution = _solve(correlation_hurts.instance)
    assert solution.objective == pytest.approx(correlation_hurts.reference['correlated_opt'], abs=TOL)


def test_solution_frame(two_stage_uniform):
    _, solution = _solve(two_stage_uniform)
    frame = solution.to_frame()
    assert list(frame.columns) == ['stage', 'buyer', 'history', 'probability', 'x', 'p']
    assert len(frame) == 40
    assert frame.groupby(['stage', 'buyer'])['probability'].sum().to_numpy() == pytest.approx(np.ones(4))


def test_size_cap(two_stage_uniform):
    with pytest.raises(SizeLimitError):
        build_lp(two_stage_uniform, cap=10)
    with pytest.raises(SizeLimitError):
        build_lp(two_stage_uniform, cap=100)


def test_unknown_method_and_mode(two_stage_uniform):
    lp = build_lp(two_stage_uniform)
    with pytest.raises(DomainError):
        solve_lp(lp, method='simplex')
    with pytest.raises(DomainError):
        build_lp(two_stage_uniform, ir_mode='interim')


def test_bland_simplex_small_lp():
    # max x + y subject to x + 2y ≤ 4, 3x + y ≤ 6
    result = bland_simplex(np.array([1.0, 1.0]), np.array([[1.0, 2.0], [3.0, 1.0]]), np.array([4.0, 6.0]))
    assert result.objective == pytest.approx(2.8)
    np.testing.assert_allclose(result.z[:2], [1.6, 1.2], atol=1e-12)
    with pytest.raises(SolverError):
        bland_simplex(np.array([1.0]), np.array([[1.0]]), np.array([-1.0]))


# ----------------------------------------------------------------------
# Explicit mechanisms
# ----------------------------------------------------------------------
def test_stagewise_myerson(two_stage_uniform, uniform12):
    solution = stagewise_myerson_mechanism(two_stage_uniform)
    report = verify_mechanism(two_stage_uniform, solution)
    assert report.passed(TOL)
    assert report.revenue == pytest.approx(2 * myerson_revenue(uniform12, 2), abs=1e-12)


def test_second_price_and_posted_price(two_stage_uniform):
    spa = verify_mechanism(two_stage_uniform, second_price_mechanism(two_stage_uniform))
    assert spa.passed(TOL)
    assert spa.revenue == pytest.approx(2.5)
    posted = verify_mechanism(two_stage_uniform, posted_price_mechanism(two_stage_uniform, [2.0, 1.0]))
    assert posted.passed(TOL)
    # stage 1 sells whenever someone has 2, stage 2 always sells at 1
    assert posted.revenue == pytest.approx(0.75 * 2.0 + 1.0)
    with pytest.raises(DomainError):
        posted_price_mechanism(two_stage_uniform, [1.0])


def test_pay_your_report(doubling_depth3):
    instance = doubling_depth3.instance
    report = verify_mechanism(instance, pay_your_report_mechanism(instance))
    assert report.passed(TOL)
    assert report.revenue == pytest.approx(doubling_depth3.reference['expected_first'])


def test_pay_your_report_needs_one_buyer(two_stage_uniform):
    with pytest.raises(DomainError):
        pay_your_report_mechanism(two_stage_uniform)


def test_entry_fee_needs_ex_ante_ir(uniform12):
    instance = DynamicInstance(2, ValueProcess.independent_stages([DiscreteDist.point_mass(1.0), uniform12]))
    solution = ex_ante_surplus_mechanism(instance)
    ex_ante = verify_mechanism(instance, solution, ir_mode='ex-ante')
    assert ex_ante.passed(TOL)
    assert ex_ante.revenue == pytest.approx(welfare_bound(instance))
    ex_post = verify_mechanism(instance, solution, ir_mode='ex-post')
    assert ex_post.ir > 1e-3
    assert ex_post.worst_kind == 'ir'


def test_entry_fee_rejects_random_first_stage(two_stage_uniform):
    with pytest.raises(DomainError):
        ex_ante_surplus_mechanism(two_stage_uniform)


@pytest.mark.parametrize('level', [2, 3])
def test_menu_mechanism(level):
    case = correlation_helps_instance(level)
    report = verify_mechanism(case.instance, menu_mechanism(case.instance, level))
    assert report.passed(TOL)
    assert report.revenue == pytest.approx(case.reference['menu_revenue'])
    assert report.revenue > case.reference['independent_bound']


@pytest.mark.parametrize('level', [1, 2, 3])
def test_report_price_mechanism(level):
    case = correlation_hurts_instance(level, correlated=False)
    report = verify_mechanism(case.instance, report_price_mechanism(case.instance, level))
    assert report.passed(TOL)
    assert report.revenue == pytest.approx(case.reference['independent_lower'])


@pytest.fixture
def two_buyer_three_values():
    """Two buyers, two independent uniform {1, 2, 3} stages."""
    stage = DiscreteDist.uniform([1.0, 2.0, 3.0])
    return DynamicInstance(2, ValueProcess.independent_stages([stage, stage]), name='uniform-1-3')


def test_payment_shift_breaks_a_constraint(two_stage_uniform):
    solution = second_price_mechanism(two_stage_uniform)
    shifted = solution.with_payment_shift(0, 0.5)
    assert not verify_mechanism(two_stage_uniform, shifted).passed(TOL)
    assert verify_mechanism(two_stage_uniform, solution).passed(TOL)


@pytest.mark.slow
def test_every_payment_shift_of_the_optimum_is_caught(two_buyer_three_values):
    lp, solution = _solve(two_buyer_three_values)
    assert solution.index.x_count == 180
    violations = [
        verify_mechanism(two_buyer_three_values, solution.with_payment_shift(column, 1.0), lp).max_violation
        for column in range(solution.index.x_count)
    ]
    assert min(violations) >= 1.0 - TOL


def test_shifted_cell_is_reported_per_unit_of_its_probability(two_buyer_three_values):
    lp, solution = _solve(two_buyer_three_values)
    # second-stage cell: first buyer at values (3, 3), second at (1, 1)
    column = solution.index.x_column(1, solution.index.profile_code(1, (8, 0)), 0)
    report = verify_mechanism(two_buyer_three_values, solution.with_payment_shift(int(column), 1.0), lp)
    assert report.max_violation >= 1.0 - TOL
    assert report.expected_shortfall < report.max_violation
    assert report.matrix_mismatch <= 1e-9


def test_rows_match_the_lp_matrix(two_buyer_three_values):
    lp, solution = _solve(two_buyer_three_values)
    rows = row_values(lp.index, solution, 'ex-post')
    assert set(rows) == set(lp.row_keys)
    report = verify_mechanism(two_buyer_three_values, solution, lp)
    assert report.matrix_mismatch <= 1e-9
    assert report.passed(TOL)


def test_corrupted_lp_matrix_is_caught(two_stage_uniform):
    lp, solution = _solve(two_stage_uniform)
    z = solution.vector
    broken = lp.ge_matrix.tolil()
    r, column = next(
        (r, c) for r in lp.rows_of('pic') for c in broken.rows[r] if abs(z[c]) > 0.1
    )
    broken[r, column] = broken[r, column] + 0.5
    lp.ge_matrix = broken.tocsr()
    report = verify_mechanism(two_stage_uniform, solution, lp)
    assert report.matrix_mismatch >= 0.05 - 1e-12
    assert not report.passed(TOL)


def test_lp_is_homogeneous(two_buyer_three_values):
    _, base = _solve(two_buyer_three_values)
    _, scaled = _solve(two_buyer_three_values.scaled(2.5))
    assert scaled.objective == pytest.approx(2.5 * base.objective, rel=1e-7)
    with pytest.raises(DomainError):
        two_buyer_three_values.scaled(0.0)


def test_instance_json_is_plain(two_stage_uniform):
    doc = json.loads(two_stage_uniform.to_json())
    assert doc['n'] == 2 and doc['m'] == 2
    assert doc['process']['type'] == 'independent'
