"""
Static optimal-auction revenue for n i.i.d. buyers.

Discrete laws go through the quantile-space revenue curve: the slope of the
curve on the quantile interval of a support value is its virtual value, and
the slope of the concave hull is its ironed virtual value. Myerson revenue is
then E[max(0, maxᵢ φ̄(vᵢ))], summed exactly over the product of the buyers'
supports.

Continuous laws (only used for regular distributions) get Myerson revenue as
the best second-price auction with a reserve.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np
from scipy import integrate, optimize

from src.distributions.continuous import ContinuousDist, integrate_survival, is_regular
from src.distributions.discrete import DiscreteDist
from src.distributions.order_statistics import expected_order_stat, order_stat_survival
from src.utils.exceptions import DomainError, SizeLimitError

logger = logging.getLogger(__name__)

DEFAULT_PROFILE_CAP = 10_000_000
RESERVE_GRID = 10_000
TIE_TOL = 1e-12


@dataclass(frozen=True)
class RevenueCurve:
    """
    Points (q, R(q)) with q = P[X ≥ v] and R(q) = v·q, plus the origin.

    ``quantiles`` ascend from 0 to 1; ``prices[i]`` is the support value whose
    quantile is ``quantiles[i]`` (NaN at the origin).
    """

    quantiles: Tuple[float, ...]
    revenues: Tuple[float, ...]
    prices: Tuple[float, ...]

    def hull(self) -> np.ndarray:
        """Upper concave hull of the curve evaluated at every quantile."""
        q = np.asarray(self.quantiles)
        r = np.asarray(self.revenues)
        keep = [0]
        for i in range(1, len(q)):
            while len(keep) >= 2:
                a, b = keep[-2], keep[-1]
                # drop b when it lies on or below the chord a -> i
                cross = (q[b] - q[a]) * (r[i] - r[a]) - (r[b] - r[a]) * (q[i] - q[a])
                if cross >= 0:
                    keep.pop()
                else:
                    break
            keep.append(i)
        return np.interp(q, q[keep], r[keep])


@dataclass(frozen=True)
class IronedVirtuals:
    """Raw and ironed virtual values per positive-mass support value."""

    support: Tuple[float, ...]
    probs: Tuple[float, ...]
    raw: Tuple[float, ...]
    ironed: Tuple[float, ...]

    def at(self, value: float) -> float:
        for v, phi in zip(self.support, self.ironed):
            if abs(v - value) <= TIE_TOL * max(1.0, abs(value)):
                return phi
        raise DomainError(f"no ironed virtual value for {value!r}")

    def as_dict(self) -> dict:
        return dict(zip(self.support, self.ironed))

    def is_monotone(self, tol: float = 1e-9) -> bool:
        phi = np.asarray(self.ironed)
        return bool(np.all(np.diff(phi) >= -tol * np.maximum(1.0, np.abs(phi[:-1]))))


def revenue_curve(dist: DiscreteDist) -> RevenueCurve:
    """Quantile-space revenue curve over the positive-mass support."""
    dist = dist.without_zero_mass()
    values = dist.values
    tail = np.cumsum(dist.probabilities[::-1])[::-1]
    # walk the support from the top so quantiles ascend
    quantiles = [0.0] + [float(min(q, 1.0)) for q in tail[::-1]]
    prices = [math.nan] + [float(v) for v in values[::-1]]
    revenues = [0.0] + [p * q for p, q in zip(prices[1:], quantiles[1:])]
    quantiles[-1] = 1.0
    return RevenueCurve(tuple(quantiles), tuple(revenues), tuple(prices))


def ironed_virtuals(dist: DiscreteDist) -> IronedVirtuals:
    """
    Ironed virtual values from the concave hull of the revenue curve.

    The value at support point vᵢ is the hull slope over its quantile interval
    [P[X > vᵢ], P[X ≥ vᵢ]]; where the hull touches the curve this is the
    successor-gap virtual value itself.

    Example:
        >>> ironed_virtuals(DiscreteDist.uniform([1.0, 2.0])).ironed
        (0.0, 2.0)
    """
    positive = dist.without_zero_mass()
    curve = revenue_curve(positive)
    q = np.asarray(curve.quantiles)
    r = np.asarray(curve.revenues)
    hull = curve.hull()
    widths = np.diff(q)
    raw_desc = np.diff(r) / widths
    ironed_desc = np.diff(hull) / widths
    # curve order is top value first; flip back to ascending support
    raw = tuple(float(x) for x in raw_desc[::-1])
    ironed = tuple(float(x) for x in ironed_desc[::-1])
    return IronedVirtuals(positive.support, positive.probs, raw, ironed)


def _max_level_revenue(levels: np.ndarray, probs: np.ndarray, n: int) -> float:
    """E[max(0, max of n i.i.d. draws of ``levels``)], exact."""
    order = np.argsort(levels, kind='stable')
    levels = levels[order]
    probs = probs[order]
    cumulative = np.minimum(np.cumsum(probs), 1.0)
    below = np.concatenate(([0.0], cumulative[:-1]))
    weights = np.power(cumulative, n) - np.power(below, n)
    return float(np.dot(np.maximum(levels, 0.0), weights))


def myerson_revenue(dist: DiscreteDist, n: int, cap: int = DEFAULT_PROFILE_CAP) -> float:
    """
    Optimal revenue Mye[Xⁿ] for ``n`` i.i.d. buyers.

    The n-fold product sum E[max(0, maxᵢ φ̄(vᵢ))] is grouped by virtual-value
    level: P[max ≤ t] = G(t)ⁿ with G the cdf of φ̄(X).

    Raises:
        DomainError: If n < 1
        SizeLimitError: If the profile count |supp|ⁿ exceeds ``cap``
    """
    if n < 1:
        raise DomainError(f"need at least one buyer, got n={n}")
    profiles = len(dist.without_zero_mass()) ** n
    if profiles > cap:
        raise SizeLimitError(f"{profiles} buyer profiles exceed the cap of {cap}")
    virtuals = ironed_virtuals(dist)
    return _max_level_revenue(np.asarray(virtuals.ironed), np.asarray(virtuals.probs), n)


def posted_price_revenue(dist: DiscreteDist, price: float, n: int = 1) -> float:
    """price · P[max of n draws ≥ price]."""
    below = float(dist.cdf_below(price))
    return float(price * (1.0 - below ** n))


def best_posted_price(dist: DiscreteDist, n: int = 1) -> Tuple[float, float]:
    """
    Revenue-maximising posted price over the support; ties go to the lower price.

    Returns:
        (price, revenue)
    """
    best_price, best_revenue = dist.support[0], -math.inf
    for value, mass in zip(dist.support, dist.probs):
        if mass <= 0:
            continue
        revenue = posted_price_revenue(dist, value, n)
        if revenue > best_revenue + TIE_TOL * max(1.0, abs(best_revenue)):
            best_price, best_revenue = value, revenue
    return best_price, best_revenue


def optimal_reserve(dist: DiscreteDist) -> float:
    """
    argmax_p p·P[X ≥ p] over the support, lowest price on ties.

    Example:
        >>> optimal_reserve(DiscreteDist.uniform([1.0, 2.0]))
        1.0
    """
    return best_posted_price(dist, 1)[0]


def max_order_posted_revenue(dist: Union[DiscreteDist, ContinuousDist], n: int) -> float:
    """Best posted-price revenue against X_{1:n} (one item, n buyers, one price)."""
    if isinstance(dist, DiscreteDist):
        return best_posted_price(dist, n)[1]

    upper = dist.effective_upper()
    grid = np.linspace(dist.lo, upper, RESERVE_GRID + 1)
    revenues = grid * (1.0 - np.power(np.asarray(dist.cdf(grid), dtype=float), n))
    i = int(np.argmax(revenues))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    if hi <= lo:
        return float(revenues[i])
    refined = optimize.minimize_scalar(
        lambda p: -p * (1.0 - float(dist.cdf(p)) ** n),
        bounds=(lo, hi),
        method='bounded',
        options={'xatol': 1e-12},
    )
    return float(max(revenues[i], -refined.fun))


# ----------------------------------------------------------------------
# Continuous (regular) Myerson revenue
# ----------------------------------------------------------------------
def _reserve_revenue(dist: ContinuousDist, n: int, reserve: float) -> float:
    """r·(1 − F(r)ⁿ) + ∫_r^∞ P[X_{2:n} > x] dx."""
    head = reserve * (1.0 - float(dist.cdf(reserve)) ** n)
    if n < 2 or reserve >= dist.hi:
        return head
    tail = integrate_survival(
        lambda t: order_stat_survival(dist, 2, n, t), reserve, dist.hi, label=dist.label
    ) - reserve
    return head + tail


def continuous_myerson_revenue(
    dist: ContinuousDist,
    n: int,
    grid_size: int = RESERVE_GRID,
) -> Tuple[float, float]:
    """
    Mye[Xⁿ] as the best second-price auction with a reserve.

    The reserve is scanned on a ``grid_size`` grid (cumulative trapezoid for the
    tail integral), then refined by a bounded scalar search around the best
    grid point with quadrature.

    Returns:
        (revenue, reserve)
    """
    if n < 1:
        raise DomainError(f"need at least one buyer, got n={n}")
    upper = dist.effective_upper()
    grid = np.linspace(dist.lo, upper, grid_size + 1)
    head = grid * (1.0 - np.power(np.asarray(dist.cdf(grid), dtype=float), n))
    if n >= 2:
        second = np.asarray(order_stat_survival(dist, 2, n, grid), dtype=float)
        from_left = integrate.cumulative_trapezoid(second, grid, initial=0.0)
        tail = from_left[-1] - from_left
    else:
        tail = np.zeros_like(grid)
    revenues = head + tail
    i = int(np.argmax(revenues))

    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    best_reserve = float(grid[i])
    best_revenue = _reserve_revenue(dist, n, best_reserve)
    if hi > lo:
        refined = optimize.minimize_scalar(
            lambda r: -_reserve_revenue(dist, n, r),
            bounds=(lo, hi),
            method='bounded',
            options={'xatol': 1e-10},
        )
        if -refined.fun > best_revenue:
            best_reserve, best_revenue = float(refined.x), float(-refined.fun)
    return best_revenue, best_reserve


def myerson_value(dist: Union[DiscreteDist, ContinuousDist], n: int, cap: int = DEFAULT_PROFILE_CAP) -> float:
    """Mye[Xⁿ] for either representation."""
    if isinstance(dist, DiscreteDist):
        return myerson_revenue(dist, n, cap=cap)
    return continuous_myerson_revenue(dist, n)[0]


# ----------------------------------------------------------------------
# Bulow–Klemperer style checks
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class BkReport:
    """Extra-bidder comparison for a regular distribution."""

    n: int
    myerson: float
    spa_extra_bidder: float
    spa_same_bidders: float
    extra_bidder_margin: float
    approximation_margin: float
    passed: bool


def bk_check(dist: ContinuousDist, n: int, tol: float = 1e-6, logger: Optional[logging.Logger] = None) -> BkReport:
    """
    Compare E[X_{2:n+1}] and E[X_{2:n}] against Mye[Xⁿ].

    Checks E[X_{2:n+1}] ≥ Mye[Xⁿ] and E[X_{2:n}] ≥ ((n−1)/n)·Mye[Xⁿ]; one
    bidder in a second-price auction pays nothing.

    Raises:
        DomainError: If the distribution is not regular on the grid
    """
    log = logger or logging.getLogger(__name__)
    if not is_regular(dist):
        raise DomainError(f"{dist.label} is not regular; extra-bidder check needs φ non-decreasing")
    mye, _ = continuous_myerson_revenue(dist, n)
    spa_extra = expected_order_stat(dist, 2, n + 1)
    spa_same = expected_order_stat(dist, 2, n) if n >= 2 else 0.0
    extra_margin = spa_extra - mye
    approx_margin = spa_same - (n - 1) / n * mye
    passed = extra_margin >= -tol and approx_margin >= -tol
    marker = '✓' if passed else '❌'
    log.info(f"{marker} {dist.label} n={n}: Mye={mye:.6g}, SPA(n+1)={spa_extra:.6g}, SPA(n)={spa_same:.6g}")
    return BkReport(n, mye, spa_extra, spa_same, extra_margin, approx_margin, passed)
