"""
Second-price (VCG) revenue across stages and Competition Complexity scans.

The Competition Complexity of an instance is the smallest number c of extra
buyers for which per-stage second-price auctions with n + c buyers collect at
least α times a benchmark revenue of the n-buyer instance.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Union

from src.auctions.lambert import lambert_cc_estimate
from src.auctions.myerson import myerson_value
from src.distributions.continuous import ContinuousDist, equal_revenue, truncated_exponential
from src.distributions.discrete import DiscreteDist
from src.distributions.order_statistics import expected_order_stat
from src.mechanisms.lp_builder import DEFAULT_NONZERO_CAP, build_lp
from src.mechanisms.process import DynamicInstance, ValueProcess
from src.mechanisms.solver import solve_lp
from src.utils.exceptions import DomainError

Distribution = Union[DiscreteDist, ContinuousDist]

BENCHMARKS = ('welfare', 'duality-min-j', 'lp-opt', 'custom')
DEFAULT_CAP_MULTIPLIER = 10
SCAN_TOL = 1e-9


def _stage_list(marginals, m: Optional[int]) -> List[Distribution]:
    if isinstance(marginals, (DiscreteDist, ContinuousDist)):
        if m is None:
            raise DomainError("a single marginal needs the number of stages m")
        return [marginals] * m
    marginals = list(marginals)
    if m is not None and len(marginals) != m:
        raise DomainError(f"got {len(marginals)} marginals for m={m} stages")
    return marginals


def vcg_revenue(marginals, t: int, m: Optional[int] = None) -> float:
    """
    Σ_k E[(X_k)_{2:t}]: revenue of a second-price auction at every stage.

    Args:
        marginals: Stage marginals, or one marginal repeated ``m`` times
        t: Number of buyers; one buyer pays nothing
        m: Number of stages when a single marginal is given

    Raises:
        DomainError: If t < 1

    Example:
        >>> vcg_revenue(DiscreteDist.point_mass(2.0), 3, m=2)
        4.0
    """
    if t < 1:
        raise DomainError(f"need at least one buyer, got t={t}")
    stages = _stage_list(marginals, m)
    if t == 1:
        return 0.0
    seen = {}
    for d in stages:
        if id(d) not in seen:
            seen[id(d)] = expected_order_stat(d, 2, t)
    return float(sum(seen[id(d)] for d in stages))


@dataclass(frozen=True)
class CcQuery:
    """
    One Competition Complexity question.

    Attributes:
        marginals: Stage marginals
        n: Base number of buyers
        alpha: Approximation factor in (0, 1]
        benchmark: 'welfare', 'duality-min-j', 'lp-opt' or 'custom'
        benchmark_value: Required for 'custom', ignored otherwise
        cap_multiplier: Scan c up to cap_multiplier·n
        instance: Dynamic instance for 'lp-opt' (built from independent
            marginals when omitted)
        dist_id: Label for reports
    """

    marginals: Sequence[Distribution]
    n: int
    alpha: float = 1.0
    benchmark: str = 'welfare'
    benchmark_value: Optional[float] = None
    cap_multiplier: int = DEFAULT_CAP_MULTIPLIER
    instance: Optional[DynamicInstance] = None
    dist_id: str = ''
    lp_cap: int = DEFAULT_NONZERO_CAP

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise DomainError(f"alpha must be in (0, 1], got {self.alpha}")
        if self.n < 1:
            raise DomainError(f"need at least one base buyer, got n={self.n}")
        if self.benchmark not in BENCHMARKS:
            raise DomainError(f"benchmark must be one of {BENCHMARKS}, got {self.benchmark!r}")
        if self.benchmark == 'custom' and self.benchmark_value is None:
            raise DomainError("the custom benchmark needs benchmark_value")
        if self.benchmark == 'lp-opt' and self.instance is None:
            if not all(isinstance(d, DiscreteDist) for d in self.marginals):
                raise DomainError("the lp-opt benchmark needs discrete marginals")
        if self.cap_multiplier < 1:
            raise DomainError(f"cap_multiplier must be positive, got {self.cap_multiplier}")

    @property
    def m(self) -> int:
        return len(self.marginals)

    @property
    def cap(self) -> int:
        return self.cap_multiplier * self.n


@dataclass(frozen=True)
class CcResult:
    """Scan outcome; ``c_star`` is None when the cap was reached first."""

    query: CcQuery
    c_star: Optional[int]
    vcg_at_c: float
    benchmark_value: float

    @property
    def status(self) -> str:
        return 'ok' if self.c_star is not None else 'unbounded'

    @property
    def target(self) -> float:
        return self.query.alpha * self.benchmark_value

    @property
    def margin(self) -> float:
        return self.vcg_at_c - self.target

    def as_row(self) -> dict:
        return {
            'benchmark': self.query.benchmark,
            'alpha': self.query.alpha,
            'n': self.query.n,
            'm': self.query.m,
            'c_star': '' if self.c_star is None else self.c_star,
            'vcg_at_c': self.vcg_at_c,
            'benchmark_value': self.benchmark_value,
            'dist_id': self.query.dist_id,
            'status': self.status,
        }


def welfare_value(marginals: Sequence[Distribution], n: int) -> float:
    """Σ_k E[(X_k)_{1:n}]."""
    return float(sum(expected_order_stat(d, 1, n) for d in marginals))


def duality_min_value(marginals: Sequence[Distribution], n: int) -> float:
    """min_j Mye[𝐗_j] + Σ_{k≠j} E[(X_k)_{1:n}]."""
    maxima = [expected_order_stat(d, 1, n) for d in marginals]
    total = sum(maxima)
    return float(min(myerson_value(d, n) + total - maxima[j] for j, d in enumerate(marginals)))


def benchmark_value(query: CcQuery, logger: Optional[logging.Logger] = None) -> float:
    """Revenue the scan has to reach (before the α factor)."""
    log = logger or logging.getLogger(__name__)
    if query.benchmark == 'custom':
        return float(query.benchmark_value)
    if query.benchmark == 'welfare':
        return welfare_value(query.marginals, query.n)
    if query.benchmark == 'duality-min-j':
        return duality_min_value(query.marginals, query.n)
    instance = query.instance
    if instance is None:
        instance = DynamicInstance(query.n, ValueProcess.independent_stages(query.marginals))
    lp = build_lp(instance.with_buyers(query.n), cap=query.lp_cap, logger=log)
    return solve_lp(lp, logger=log).objective


def competition_complexity(query: CcQuery, logger: Optional[logging.Logger] = None) -> CcResult:
    """
    Linear scan c = 0, 1, … up to the cap for the first c with
    VCG(n + c) ≥ α·benchmark.

    Each step also asserts that VCG revenue did not drop with the extra buyer.

    Returns:
        CcResult (status 'unbounded' when the cap is reached)
    """
    log = logger or logging.getLogger(__name__)
    value = benchmark_value(query, log)
    target = query.alpha * value
    log.debug(f"📊 CC scan {query.dist_id or 'instance'}: {query.benchmark}={value:.12g}, target {target:.12g}")

    previous = -math.inf
    revenue = 0.0
    for c in range(query.cap + 1):
        revenue = vcg_revenue(query.marginals, query.n + c)
        if revenue < previous - SCAN_TOL * max(1.0, abs(previous)):
            raise DomainError(
                f"second-price revenue fell from {previous:.12g} to {revenue:.12g} at c={c}"
            )
        if revenue >= target - SCAN_TOL * max(1.0, abs(target)):
            assert c == 0 or previous < target, "scan must stop at the first c reaching the target"
            log.debug(f"✓ c*={c} (VCG {revenue:.12g})")
            return CcResult(query, c, revenue, value)
        previous = revenue

    log.warning(f"⚠️ CC scan reached the cap c={query.cap} without meeting α·benchmark")
    return CcResult(query, None, revenue, value)


# ----------------------------------------------------------------------
# Lower-bound family: m−1 exponential stages and one equal-revenue stage
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class LowerBoundComparison:
    """Entry-free auction revenue vs second-price revenue with n + c buyers."""

    n: int
    m: int
    c: int
    auction_revenue: float
    vcg_revenue: float

    @property
    def vcg_catches_up(self) -> bool:
        return self.vcg_revenue >= self.auction_revenue - SCAN_TOL


def lower_bound_marginals(m: int, upper: float, equal_revenue_upper: float) -> List[ContinuousDist]:
    """m − 1 Exp(1) stages truncated at ``upper``, then equal revenue capped at ``equal_revenue_upper``."""
    if m < 2:
        raise DomainError(f"the lower-bound family needs m ≥ 2, got m={m}")
    exp_stage = truncated_exponential(1.0, upper)
    return [exp_stage] * (m - 1) + [equal_revenue(equal_revenue_upper)]


def lower_bound_auction_revenue(
    n: int,
    m: int,
    upper: float,
    equal_revenue_upper: float,
    c: int = 0,
) -> LowerBoundComparison:
    """
    (m − 1)·E[X_{1:n}] for the exponential stages against
    (m − 1)·E[X_{2:n+c}] + E[Y_{2:n+c}].

    The first value is what a dynamic auction collects by selling the
    exponential stages at full surplus and handing out the last stage for free.
    """
    if n < 1 or c < 0:
        raise DomainError(f"need n ≥ 1 and c ≥ 0, got n={n}, c={c}")
    marginals = lower_bound_marginals(m, upper, equal_revenue_upper)
    auction = (m - 1) * expected_order_stat(marginals[0], 1, n)
    return LowerBoundComparison(n, m, c, float(auction), vcg_revenue(marginals, n + c))


@dataclass(frozen=True)
class CrossingResult:
    n: int
    m: int
    c_star: Optional[int]
    estimate: float

    @property
    def estimate_ceiling(self) -> int:
        return max(0, math.ceil(self.estimate - 1e-9))

    @property
    def within_one(self) -> bool:
        return self.c_star is not None and abs(self.c_star - self.estimate_ceiling) <= 1

    def as_row(self) -> dict:
        return {
            'n': self.n,
            'm': self.m,
            'c_star': '' if self.c_star is None else self.c_star,
            'lambert_estimate': self.estimate,
            'estimate_ceiling': self.estimate_ceiling,
            'within_one': self.within_one,
        }


def lower_bound_crossing(
    n: int,
    m: int,
    upper: float = 40.0,
    equal_revenue_upper: float = 1e8,
    cap_multiplier: int = DEFAULT_CAP_MULTIPLIER,
) -> CrossingResult:
    """
    Smallest c with (m − 1)·E[X_{2:n+c}] + E[Y_{2:n+c}] ≥ (m − 1)·E[X_{1:n}],
    next to the Lambert-W estimate (m − 1)·W(n·e/(m − 1)) − n.
    """
    marginals = lower_bound_marginals(m, upper, equal_revenue_upper)
    query = CcQuery(
        marginals=marginals,
        n=n,
        benchmark='custom',
        benchmark_value=(m - 1) * expected_order_stat(marginals[0], 1, n),
        cap_multiplier=cap_multiplier,
        dist_id=f"exp-er-m{m}",
    )
    result = competition_complexity(query)
    return CrossingResult(n, m, result.c_star, lambert_cc_estimate(n, m))
