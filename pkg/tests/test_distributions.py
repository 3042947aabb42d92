import math

import numpy as np
import pytest

from src.distributions.continuous import (
    PiecewiseLinearH,
    check_mhr,
    equal_revenue,
    exponential,
    make_continuous,
    truncated_exponential,
    truncated_weibull,
    uniform,
    virtual_value_continuous,
)
from src.distributions.discrete import DiscreteDist, product_support_size
from src.distributions.order_statistics import (
    expected_order_stat,
    harmonic,
    max_hazard_is_monotone,
    monte_carlo_order_stat,
    order_stat_cdf,
    order_stat_survival,
    order_stat_table,
)
from src.utils.exceptions import DivergenceError, DomainError


# ----------------------------------------------------------------------
# DiscreteDist
# ----------------------------------------------------------------------
def test_discrete_basics(uniform12):
    assert uniform12.mean() == pytest.approx(1.5)
    assert uniform12.cdf(1.0) == pytest.approx(0.5)
    assert uniform12.cdf(0.5) == 0.0
    assert uniform12.sf(2.0) == 0.0
    assert uniform12.survival_at_least(2.0) == pytest.approx(0.5)
    assert uniform12.pmf(3.0) == 0.0
    assert uniform12.successor(1.0) == 2.0
    assert uniform12.successor(2.0) is None


def test_discrete_virtual_values(uniform12):
    assert uniform12.virtual_value(1.0) == pytest.approx(0.0)
    assert uniform12.virtual_value(2.0) == pytest.approx(2.0)
    assert uniform12.is_regular()


def test_irregular_virtual_values():
    dist = DiscreteDist((1.0, 2.0, 3.0), (0.5, 0.1, 0.4))
    np.testing.assert_allclose(dist.virtual_values(), [0.0, -2.0, 3.0])
    assert not dist.is_regular()


@pytest.mark.parametrize('support, probs', [
    ((1.0, 1.0), (0.5, 0.5)),
    ((2.0, 1.0), (0.5, 0.5)),
    ((1.0, 2.0), (0.5, 0.6)),
    ((1.0, 2.0), (-0.1, 1.1)),
    ((), ()),
])
def test_discrete_rejects_bad_input(support, probs):
    with pytest.raises(DomainError):
        DiscreteDist(support, probs)


def test_virtual_value_outside_support(uniform12):
    with pytest.raises(DomainError):
        uniform12.virtual_value(1.5)


def test_scaled_and_point_mass(uniform12):
    assert uniform12.scaled(3.0).support == (3.0, 6.0)
    point = DiscreteDist.point_mass(4.0)
    assert point.is_degenerate()
    assert point.virtual_value(4.0) == 4.0
    assert product_support_size([uniform12, point, uniform12]) == 4


# ----------------------------------------------------------------------
# Order statistics
# ----------------------------------------------------------------------
def test_order_stat_cdf_binomial_tail():
    # F(x) = 1/2: P[X_{2:4} ≤ x] = Σ_{j≥3} C(4,j)/16 = 5/16
    half = DiscreteDist.uniform([0.0, 1.0])
    assert order_stat_cdf(half, 2, 4, 0.5) == pytest.approx(5 / 16)
    assert order_stat_survival(half, 2, 4, 0.5) == pytest.approx(11 / 16)


def test_second_of_four_survival_in_hazard_form(exp1):
    # 1 − F_{2:4} = 3e^{−4H} − 8e^{−3H} + 6e^{−2H} with H(x) = x
    for x in (0.1, 0.7, 2.5):
        expected = 3 * math.exp(-4 * x) - 8 * math.exp(-3 * x) + 6 * math.exp(-2 * x)
        assert order_stat_survival(exp1, 2, 4, x) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize('n', [1, 2, 3, 5, 10])
def test_exponential_maximum_is_harmonic(exp1, n):
    assert expected_order_stat(exp1, 1, n) == pytest.approx(harmonic(n), abs=1e-6)
    if n >= 2:
        assert expected_order_stat(exp1, 2, n) == pytest.approx(harmonic(n) - 1, abs=1e-6)


def test_second_of_three_exponential(exp1):
    assert expected_order_stat(exp1, 2, 3) == pytest.approx(5 / 6, abs=1e-8)


def test_discrete_expected_order_stat(uniform12):
    assert expected_order_stat(uniform12, 1, 2) == pytest.approx(1.75)
    assert expected_order_stat(uniform12, 2, 2) == pytest.approx(1.25)
    assert expected_order_stat(DiscreteDist.point_mass(3.0), 2, 5) == pytest.approx(3.0)


@pytest.mark.parametrize('n', [2, 3, 6])
def test_truncated_equal_revenue_second_highest(n):
    assert expected_order_stat(equal_revenue(1e8), 2, n) == pytest.approx(n - 1, abs=1e-3)


def test_untruncated_equal_revenue_diverges():
    with pytest.raises(DivergenceError):
        expected_order_stat(equal_revenue(), 1, 2)
    with pytest.raises(DivergenceError):
        equal_revenue().mean()


@pytest.mark.parametrize('r, n', [(0, 3), (4, 3), (1, 0)])
def test_rank_out_of_range(exp1, r, n):
    with pytest.raises(DomainError):
        expected_order_stat(exp1, r, n)


def test_order_stat_table_skips_impossible_ranks(uniform12):
    table = order_stat_table(uniform12, ranks=[1, 2], sizes=[1, 2])
    assert set(table) == {(1, 1), (1, 2), (2, 2)}


def test_monte_carlo_matches_closed_form(exp1):
    mean, stderr = monte_carlo_order_stat(exp1, 2, 3, trials=200_000, seed=7)
    assert abs(mean - 5 / 6) < 6 * stderr
    assert monte_carlo_order_stat(exp1, 2, 3, trials=1000, seed=7) == monte_carlo_order_stat(exp1, 2, 3, trials=1000, seed=7)


@pytest.mark.slow
@pytest.mark.parametrize('r, n', [(1, 3), (2, 3), (2, 4)])
def test_monte_carlo_matches_discrete_closed_form(r, n):
    dist = DiscreteDist((1.0, 2.0, 5.0), (0.5, 0.3, 0.2))
    mean, stderr = monte_carlo_order_stat(dist, r, n, trials=1_000_000)
    assert abs(mean - expected_order_stat(dist, r, n)) <= 3 * stderr


# ----------------------------------------------------------------------
# Continuous families and hazard checks
# ----------------------------------------------------------------------
def test_family_means():
    assert uniform(2.0, 5.0).mean() == pytest.approx(3.5, abs=1e-9)
    assert exponential(2.0).mean() == pytest.approx(0.5, abs=1e-9)
    # E[X] = 1 + ln(V) for equal revenue capped at V
    assert equal_revenue(100.0).mean() == pytest.approx(1 + math.log(100.0), abs=1e-8)


def test_truncated_families_are_normalised():
    for dist in (truncated_exponential(1.0, 3.0), truncated_weibull(2.0, 1.0, 2.0)):
        assert dist.cdf(dist.hi) == 1.0
        assert dist.cdf(dist.lo) == pytest.approx(0.0, abs=1e-15)
        assert dist.sf(0.5 * dist.hi) == pytest.approx(1.0 - dist.cdf(0.5 * dist.hi), abs=1e-14)


def test_virtual_value_continuous():
    assert virtual_value_continuous(uniform(0.0, 1.0), 0.75) == pytest.approx(0.5)
    assert virtual_value_continuous(exponential(1.0), 2.0) == pytest.approx(1.0)
    with pytest.raises(DomainError):
        virtual_value_continuous(uniform(0.0, 1.0), 2.0)


def test_check_mhr():
    assert check_mhr(exponential(1.0)).is_mhr
    assert check_mhr(truncated_weibull(1.5, 1.0, 6.0)).is_mhr
    assert not check_mhr(equal_revenue(100.0)).is_mhr
    with pytest.raises(DomainError):
        check_mhr(DiscreteDist.uniform([1.0, 2.0]))


def test_maximum_keeps_monotone_hazard():
    assert max_hazard_is_monotone(exponential(1.0), 3).is_mhr
    assert max_hazard_is_monotone(uniform(0.0, 1.0), 4).is_mhr


@pytest.mark.parametrize('kind, params', [
    ('exponential', {'rate': -1.0}),
    ('uniform', {'a': 2.0, 'b': 1.0}),
    ('equal-revenue', {'upper': 0.5}),
    ('truncated', {'base': 'weibull', 'shape': 0.5}),
    ('truncated', {'base': 'gamma'}),
    ('lognormal', {}),
])
def test_make_continuous_rejects(kind, params):
    with pytest.raises(DomainError):
        make_continuous(kind, **params)


# ----------------------------------------------------------------------
# Piecewise-linear cumulative hazard
# ----------------------------------------------------------------------
def test_piecewise_hazard_values():
    h = PiecewiseLinearH((0.0, 1.0, 2.0), (1.0, 3.0))
    assert h.value(2.0) == pytest.approx(4.0)
    assert h.value(0.5) == pytest.approx(0.5)
    assert h.slope_at(1.5) == 3.0
    assert h.inverse(2.5) == pytest.approx(1.5)
    assert h.intercepts == pytest.approx((0.0, -2.0))


def test_piecewise_hazard_distribution_has_atom_at_finite_end():
    dist = PiecewiseLinearH((0.0, 1.0, 2.0), (1.0, 3.0)).to_distribution()
    assert dist.atom_at_hi == pytest.approx(math.exp(-4.0))
    assert dist.sf(1.0) == pytest.approx(math.exp(-1.0))
    assert check_mhr(dist).is_mhr


def test_piecewise_hazard_unbounded_matches_exponential():
    dist = PiecewiseLinearH((0.0, math.inf), (1.0,)).to_distribution()
    assert expected_order_stat(dist, 2, 3) == pytest.approx(5 / 6, abs=1e-8)


@pytest.mark.parametrize('breakpoints, slopes', [
    ((0.0, 1.0, 2.0), (3.0, 1.0)),
    ((0.0, 1.0), (1.0, 2.0)),
    ((0.0, 2.0, 1.0), (1.0, 2.0)),
    ((0.0, 1.0), (0.0,)),
    ((0.0, math.inf, 5.0), (1.0, 2.0)),
])
def test_piecewise_hazard_rejects(breakpoints, slopes):
    with pytest.raises(DomainError):
        PiecewiseLinearH(breakpoints, slopes)


def test_random_piecewise_hazard_is_valid():
    rng = np.random.default_rng(3)
    for _ in range(20):
        h = PiecewiseLinearH.random(rng, pieces=3)
        assert list(h.slopes) == sorted(h.slopes)
        assert h.breakpoints[0] == 0.0
        assert math.isinf(h.breakpoints[-1])
