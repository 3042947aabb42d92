import math

import numpy as np
import pytest

from src.auctions.competition import (
    CcQuery,
    benchmark_value,
    competition_complexity,
    duality_min_value,
    lower_bound_auction_revenue,
    lower_bound_crossing,
    lower_bound_marginals,
    vcg_revenue,
)
from src.auctions.instances import (
    doubling_instance,
    menu_best_responses,
    nonmonotonicity_instances,
    random_independent_instance,
    correlation_helps_instance,
    correlation_hurts_instance,
)
from src.auctions.myerson import myerson_revenue
from src.distributions.continuous import exponential
from src.distributions.discrete import DiscreteDist
from src.duality.certificates import min_stage_bound
from src.mechanisms.constructions import stagewise_myerson_mechanism
from src.mechanisms.lp_builder import build_lp
from src.mechanisms.solver import solve_lp
from src.mechanisms.verification import verify_mechanism, welfare_bound
from src.utils.exceptions import DomainError, SizeLimitError


# ----------------------------------------------------------------------
# Second-price revenue
# ----------------------------------------------------------------------
def test_vcg_revenue(uniform12):
    assert vcg_revenue(DiscreteDist.point_mass(2.0), 3, m=2) == pytest.approx(4.0)
    assert vcg_revenue([uniform12, uniform12], 2) == pytest.approx(2.5)
    assert vcg_revenue(uniform12, 1, m=3) == 0.0
    with pytest.raises(DomainError):
        vcg_revenue(uniform12, 0, m=1)
    with pytest.raises(DomainError):
        vcg_revenue(uniform12, 2)
    with pytest.raises(DomainError):
        vcg_revenue([uniform12], 2, m=2)


# ----------------------------------------------------------------------
# Competition Complexity scans
# ----------------------------------------------------------------------
@pytest.mark.parametrize('n, m, expected', [
    # H_{n+c} − 1 ≥ H_n, independent of m
    (1, 1, 3),
    (1, 3, 3),
    (2, 2, 5),
])
def test_exponential_welfare_scan(exp1, n, m, expected):
    result = competition_complexity(CcQuery(marginals=[exp1] * m, n=n, dist_id='exp1'))
    assert result.c_star == expected
    assert result.status == 'ok'
    assert result.margin >= -1e-9
    assert result.benchmark_value == pytest.approx(m * sum(1 / i for i in range(1, n + 1)), abs=1e-6)


def test_duality_benchmark_scan(exp1):
    query = CcQuery(marginals=[exp1, exp1], n=1, benchmark='duality-min-j')
    # Mye = e^{−1} on one stage plus E[X] = 1 on the other; 2(H_3 − 1) is the first to exceed it
    assert benchmark_value(query) == pytest.approx(math.exp(-1.0) + 1.0, abs=1e-6)
    assert duality_min_value([exp1, exp1], 1) == pytest.approx(benchmark_value(query))
    assert competition_complexity(query).c_star == 2


def test_alpha_lowers_the_target(exp1):
    full = competition_complexity(CcQuery(marginals=[exp1], n=1))
    relaxed = competition_complexity(CcQuery(marginals=[exp1], n=1, alpha=0.6))
    assert relaxed.c_star <= full.c_star
    # H_3 − 1 = 5/6 is the first second-highest mean above 0.6
    assert full.c_star == 3
    assert relaxed.c_star == 2


def test_lp_benchmark(uniform12):
    query = CcQuery(marginals=[uniform12, uniform12], n=1, benchmark='lp-opt')
    value = benchmark_value(query)
    assert 2.0 - 1e-6 <= value <= 2.5 + 1e-6
    assert competition_complexity(query).c_star == 1


def test_unbounded_scan(uniform12):
    query = CcQuery(marginals=[uniform12], n=1, benchmark='custom', benchmark_value=100.0, cap_multiplier=2)
    result = competition_complexity(query)
    assert result.c_star is None
    assert result.status == 'unbounded'
    assert result.as_row()['c_star'] == ''
    assert result.vcg_at_c == pytest.approx(vcg_revenue([uniform12], 3))


@pytest.mark.parametrize('kwargs', [
    {'alpha': 0.0},
    {'alpha': 1.5},
    {'n': 0},
    {'benchmark': 'revenue'},
    {'benchmark': 'custom'},
    {'cap_multiplier': 0},
])
def test_bad_queries(exp1, kwargs):
    params = {'marginals': [exp1], 'n': 1, **kwargs}
    with pytest.raises(DomainError):
        CcQuery(**params)


def test_lp_benchmark_needs_discrete_marginals(exp1):
    with pytest.raises(DomainError):
        CcQuery(marginals=[exp1], n=1, benchmark='lp-opt')


# ----------------------------------------------------------------------
# Exponential / equal-revenue lower-bound family
# ----------------------------------------------------------------------
def test_lower_bound_family():
    marginals = lower_bound_marginals(3, 40.0, 1e8)
    assert len(marginals) == 3
    assert marginals[0] is marginals[1]
    with pytest.raises(DomainError):
        lower_bound_marginals(1, 40.0, 1e8)


def test_vcg_catches_up_with_one_extra_buyer():
    # E[X_{2:2}] = 1/2 plus about 1 from the equal-revenue stage beats E[X] ≈ 1
    assert not lower_bound_auction_revenue(1, 2, 40.0, 1e8, c=0).vcg_catches_up
    comparison = lower_bound_auction_revenue(1, 2, 40.0, 1e8, c=1)
    assert comparison.auction_revenue == pytest.approx(1.0, abs=1e-9)
    assert comparison.vcg_catches_up


def test_crossing_against_lambert_estimate():
    crossing = lower_bound_crossing(1, 2)
    assert crossing.c_star == 1
    assert crossing.estimate == pytest.approx(0.0, abs=1e-12)
    assert crossing.estimate_ceiling == 0
    assert crossing.within_one
    assert crossing.as_row()['within_one'] is True


# ----------------------------------------------------------------------
# Named instances
# ----------------------------------------------------------------------
def test_doubling_references():
    case = doubling_instance(2)
    assert case.reference['expected_first'] == 2.0
    assert case.reference['expected_second'] == 4.0
    assert case.reference['myerson_first'] == pytest.approx(1.5)
    assert case.instance.process.supports[1] == (0.0, 2.0, 4.0, 8.0, 16.0)
    with pytest.raises(DomainError):
        doubling_instance(0)
    with pytest.raises(SizeLimitError):
        doubling_instance(6)


def test_correlation_constructions():
    with pytest.raises(DomainError):
        correlation_helps_instance(1)
    with pytest.raises(DomainError):
        correlation_hurts_instance(0)
    helps, hurts = nonmonotonicity_instances(2)
    assert helps.correlated.instance.marginals()[1].probs == pytest.approx(
        helps.independent.instance.marginals()[1].probs)
    assert not hurts.correlated.instance.independent
    assert hurts.independent.instance.independent
    assert hurts.correlated.reference['independent_lower'] == pytest.approx(3.75)


@pytest.mark.parametrize('level', [2, 3, 4])
def test_menu_best_responses(level):
    table = menu_best_responses(level)
    assert len(table) == level + 1
    assert table['ok'].all()
    assert table['probability'].sum() == pytest.approx(1.0)
    assert (table['assigned'] == 1).sum() == 1


def test_random_instances_respect_bound_ordering():
    rng = np.random.default_rng(11)
    for _ in range(8):
        instance = random_independent_instance(rng, max_buyers=2, max_stages=2, max_support=3)
        opt = solve_lp(build_lp(instance)).objective
        stagewise = sum(myerson_revenue(d, instance.n) for d in instance.marginals())
        _, bound = min_stage_bound(instance)
        assert stagewise <= opt + 1e-6
        assert opt <= bound + 1e-6
        assert bound <= welfare_bound(instance) + 1e-9
        assert verify_mechanism(instance, stagewise_myerson_mechanism(instance)).passed(1e-6)


def test_scan_uses_exponential_closed_form():
    # H_4 − 1 is the first second-highest mean to reach E[X] = 1
    result = competition_complexity(CcQuery(marginals=[exponential(1.0)], n=1))
    assert result.vcg_at_c == pytest.approx(1 / 2 + 1 / 3 + 1 / 4, abs=1e-6)
