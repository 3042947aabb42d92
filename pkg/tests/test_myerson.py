import numpy as np
import pytest
from scipy.special import lambertw

from src.auctions.lambert import lambert_cc_estimate, lambert_w
from src.auctions.myerson import (
    best_posted_price,
    bk_check,
    continuous_myerson_revenue,
    ironed_virtuals,
    max_order_posted_revenue,
    myerson_revenue,
    myerson_value,
    optimal_reserve,
    revenue_curve,
)
from src.distributions.continuous import exponential, uniform
from src.distributions.discrete import DiscreteDist
from src.utils.exceptions import DomainError, SizeLimitError, SolverError

IRREGULAR = DiscreteDist((1.0, 2.0, 3.0), (0.5, 0.1, 0.4), name='irregular')


def test_uniform_two_point(uniform12):
    assert ironed_virtuals(uniform12).ironed == pytest.approx((0.0, 2.0))
    assert myerson_revenue(uniform12, 1) == pytest.approx(1.0)
    assert myerson_revenue(uniform12, 2) == pytest.approx(1.5)
    assert optimal_reserve(uniform12) == 1.0


def test_ironing_flattens_the_dip():
    virtuals = ironed_virtuals(IRREGULAR)
    assert virtuals.raw == pytest.approx((0.0, -2.0, 3.0))
    assert virtuals.ironed == pytest.approx((-1 / 3, -1 / 3, 3.0))
    assert virtuals.is_monotone()
    assert virtuals.at(2.0) == pytest.approx(-1 / 3)
    # selling only at 3 is optimal for one buyer
    assert myerson_revenue(IRREGULAR, 1) == pytest.approx(1.2)
    assert best_posted_price(IRREGULAR) == pytest.approx((3.0, 1.2))


def test_revenue_curve_runs_from_origin(uniform12):
    curve = revenue_curve(uniform12)
    assert curve.quantiles == pytest.approx((0.0, 0.5, 1.0))
    assert curve.revenues == pytest.approx((0.0, 1.0, 1.0))


def test_zero_mass_points_are_ignored():
    dist = DiscreteDist((1.0, 2.0, 3.0), (0.5, 0.0, 0.5))
    assert ironed_virtuals(dist).support == (1.0, 3.0)
    assert myerson_revenue(dist, 1) == pytest.approx(1.5)


@pytest.mark.parametrize('depth', [2, 3, 4])
def test_doubling_stage_myerson(depth):
    support = (0.0,) + tuple(2.0 ** i for i in range(1, depth + 1))
    probs = (2.0 ** -depth,) + tuple(2.0 ** -i for i in range(1, depth + 1))
    dist = DiscreteDist(support, probs)
    assert myerson_revenue(dist, 1) == pytest.approx(2 - 2.0 ** (1 - depth))
    assert optimal_reserve(dist) == 2.0
    virtuals = ironed_virtuals(dist)
    assert virtuals.is_monotone()
    assert virtuals.at(2.0) == pytest.approx(2.0 ** (2 - depth))


def test_point_mass_extracts_value():
    assert myerson_revenue(DiscreteDist.point_mass(5.0), 3) == pytest.approx(5.0)


def test_profile_cap():
    dist = DiscreteDist.uniform(range(1, 11))
    with pytest.raises(SizeLimitError):
        myerson_revenue(dist, 4, cap=1000)
    with pytest.raises(DomainError):
        myerson_revenue(dist, 0)


def test_posted_price_against_maximum(uniform12):
    assert max_order_posted_revenue(uniform12, 2) == pytest.approx(1.5)
    assert myerson_value(uniform12, 2) >= max_order_posted_revenue(uniform12, 2) - 1e-12


def test_continuous_myerson_uniform():
    revenue, reserve = continuous_myerson_revenue(uniform(0.0, 1.0), 1)
    assert revenue == pytest.approx(0.25, abs=1e-8)
    assert reserve == pytest.approx(0.5, abs=1e-4)
    revenue, reserve = continuous_myerson_revenue(uniform(0.0, 1.0), 2)
    assert revenue == pytest.approx(5 / 12, abs=1e-7)
    assert reserve == pytest.approx(0.5, abs=1e-3)


def test_continuous_myerson_exponential_single_buyer():
    # best posted price 1 earns e^{-1}
    revenue, reserve = continuous_myerson_revenue(exponential(1.0), 1)
    assert revenue == pytest.approx(np.exp(-1.0), abs=1e-8)
    assert reserve == pytest.approx(1.0, abs=1e-3)


@pytest.mark.parametrize('n', [1, 2, 4])
def test_extra_bidder_beats_optimal_reserve(n):
    report = bk_check(uniform(0.0, 1.0), n)
    assert report.passed
    assert report.spa_extra_bidder >= report.myerson - 1e-6


def test_lambert_w():
    assert lambert_w(np.e) == pytest.approx(1.0, abs=1e-12)
    assert lambert_w(0.0) == 0.0
    assert lambert_w(-1 / np.e) == pytest.approx(-1.0)
    for x in (-0.3, 0.5, 10.0, 1e6):
        w = lambert_w(x)
        assert w * np.exp(w) == pytest.approx(x, rel=1e-11, abs=1e-12)
    with pytest.raises(DomainError):
        lambert_w(-1.0)


@pytest.mark.parametrize('x', [-0.2, 0.1, 1.0, 3.5, 250.0])
def test_lambert_w_matches_scipy(x):
    assert lambert_w(x) == pytest.approx(float(lambertw(x).real), rel=1e-10, abs=1e-12)


def test_lambert_w_reports_no_convergence():
    with pytest.raises(SolverError, match='did not converge'):
        lambert_w(250.0, max_iter=1)
    with pytest.raises(SolverError):
        lambert_w(2.0, max_iter=0)
    assert lambert_w(250.0, max_iter=50) == pytest.approx(float(lambertw(250.0).real), rel=1e-10)


def test_lambert_estimate():
    # n = 1, m = 2: W(e) − 1 = 0
    assert lambert_cc_estimate(1, 2) == pytest.approx(0.0, abs=1e-12)
    assert lambert_cc_estimate(5, 10) == pytest.approx(9 * lambert_w(5 * np.e / 9) - 5)
    with pytest.raises(DomainError):
        lambert_cc_estimate(1, 1)
