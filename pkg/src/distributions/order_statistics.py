"""
Order statistics of i.i.d. draws.

Rank 1 is the maximum: X_{1:n} ≥ X_{2:n} ≥ … ≥ X_{n:n}. The cdf is the
binomial tail

    F_{r:n}(x) = Σ_{j ≥ n−r+1} C(n, j) F(x)^j (1 − F(x))^{n−j}

and the survival is the complementary sum, evaluated directly from the
distribution's survival function so that thin tails stay accurate.
"""

import logging
import math
from typing import Tuple, Union

import numpy as np

from src.distributions.continuous import (
    TAIL_TOL,
    ContinuousDist,
    MhrCheck,
    hazard_scan,
    integrate_survival,
)
from src.distributions.discrete import DiscreteDist
from src.utils.exceptions import DomainError

logger = logging.getLogger(__name__)

Distribution = Union[DiscreteDist, ContinuousDist]


def _check_rank(r: int, n: int) -> None:
    if n < 1 or not 1 <= r <= n:
        raise DomainError(f"order statistic rank must satisfy 1 ≤ r ≤ n, got r={r}, n={n}")


def _binomial_cdf(F, S, r: int, n: int):
    F = np.asarray(F, dtype=float)
    S = np.asarray(S, dtype=float)
    total = np.zeros_like(F)
    for j in range(n - r + 1, n + 1):
        total = total + math.comb(n, j) * np.power(F, j) * np.power(S, n - j)
    return np.clip(total, 0.0, 1.0)


def _binomial_survival(F, S, r: int, n: int):
    F = np.asarray(F, dtype=float)
    S = np.asarray(S, dtype=float)
    total = np.zeros_like(S)
    for j in range(0, n - r + 1):
        total = total + math.comb(n, j) * np.power(F, j) * np.power(S, n - j)
    return np.clip(total, 0.0, 1.0)


def order_stat_cdf(dist: Distribution, r: int, n: int, x):
    """
    P[X_{r:n} ≤ x].

    Args:
        dist: Discrete or continuous distribution
        r: Rank, 1 for the maximum
        n: Number of draws
        x: Point or array of points

    Raises:
        DomainError: If the rank is out of range

    Example:
        >>> order_stat_cdf(DiscreteDist.uniform([0.0, 1.0]), 2, 4, 0.5)
        0.3125
    """
    _check_rank(r, n)
    if r == 1:
        result = np.power(np.asarray(dist.cdf(x), dtype=float), n)
    else:
        result = _binomial_cdf(dist.cdf(x), dist.sf(x), r, n)
    return float(result) if np.ndim(result) == 0 else result


def order_stat_survival(dist: Distribution, r: int, n: int, x):
    """P[X_{r:n} > x]."""
    _check_rank(r, n)
    result = _binomial_survival(dist.cdf(x), dist.sf(x), r, n)
    return float(result) if np.ndim(result) == 0 else result


def expected_order_stat(dist: Distribution, r: int, n: int, tail: float = TAIL_TOL) -> float:
    """
    E[X_{r:n}].

    Discrete laws are summed exactly over the support; continuous laws
    integrate the order-statistic survival.

    Raises:
        DomainError: Bad rank, or a continuous law with negative support
        DivergenceError: When the expectation is infinite

    Example:
        >>> expected_order_stat(DiscreteDist.uniform([1.0, 2.0]), 1, 2)
        1.75
    """
    _check_rank(r, n)
    if isinstance(dist, DiscreteDist):
        cdf_at = np.asarray(order_stat_cdf(dist, r, n, dist.values), dtype=float)
        increments = np.diff(np.concatenate(([0.0], cdf_at)))
        return float(np.dot(dist.values, increments))

    return integrate_survival(
        lambda t: order_stat_survival(dist, r, n, t),
        dist.lo,
        dist.hi,
        tail=tail,
        label=f"X_{{{r}:{n}}} of {dist.label}",
    )


def order_stat_table(dist: Distribution, ranks, sizes) -> dict:
    """E[X_{r:n}] for every (r, n) with r ≤ n, keyed by the pair."""
    table = {}
    for n in sizes:
        for r in ranks:
            if r <= n:
                table[(r, n)] = expected_order_stat(dist, r, n)
    return table


def harmonic(n: int) -> float:
    """H_n = Σ_{i ≤ n} 1/i; the mean of the maximum of n Exp(1) draws."""
    if n < 0:
        raise DomainError(f"harmonic number needs n ≥ 0, got {n}")
    return float(math.fsum(1.0 / i for i in range(1, n + 1)))


def sample_order_stat(
    dist: Distribution,
    r: int,
    n: int,
    trials: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """``trials`` independent draws of X_{r:n}."""
    _check_rank(r, n)
    draws = np.asarray(dist.sample(rng, (trials, n)), dtype=float)
    draws.sort(axis=1)
    return draws[:, n - r]


def monte_carlo_order_stat(
    dist: Distribution,
    r: int,
    n: int,
    trials: int = 1_000_000,
    seed: int = 20240607,
) -> Tuple[float, float]:
    """
    Monte Carlo estimate of E[X_{r:n}] and its standard error.

    Returns:
        (mean, standard error)
    """
    rng = np.random.default_rng(seed)
    values = sample_order_stat(dist, r, n, trials, rng)
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(trials))


def max_hazard(dist: ContinuousDist, n: int, x):
    """Hazard of X_{1:n}: n F^{n−1} f / (1 − Fⁿ)."""
    F = np.asarray(dist.cdf(x), dtype=float)
    S = np.asarray(dist.sf(x), dtype=float)
    f = np.asarray(dist.pdf(x), dtype=float)
    with np.errstate(divide='ignore', invalid='ignore'):
        # 1 − (1 − S)^n without cancellation
        survival = np.where(S >= 1.0, 1.0, -np.expm1(n * np.log1p(-np.minimum(S, 1.0))))
        result = np.where(survival > 0, n * np.power(F, n - 1) * f / survival, np.inf)
    return float(result) if np.ndim(result) == 0 else result


def max_hazard_is_monotone(
    dist: ContinuousDist,
    n: int,
    grid_size: int = 2000,
    tol: float = 1e-9,
    tail: float = TAIL_TOL,
) -> MhrCheck:
    """Grid scan of the hazard of X_{1:n} (MHR laws keep MHR maxima)."""
    if not isinstance(dist, ContinuousDist):
        raise DomainError("hazard scans are defined for continuous distributions only")
    upper = dist.effective_upper(tail)
    grid = np.linspace(dist.lo, upper, grid_size + 1)[:-1]
    top_survival = np.asarray(order_stat_survival(dist, 1, n, grid), dtype=float)
    grid = grid[top_survival > tail]
    return hazard_scan(np.asarray(max_hazard(dist, n, grid), dtype=float), tol, len(grid))
