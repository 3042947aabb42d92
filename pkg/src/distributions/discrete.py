"""
Finite-support value distributions.

``DiscreteDist`` is the building block of every LP instance: stage marginals,
conditional stage distributions and the static Myerson computations all work
on it. Virtual values here use the successor-gap form

    φ(v) = v − (v₊ − v)·(1 − F(v)) / f(v)

with v₊ the next support point; the top support value has φ(v̄) = v̄.
"""

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np

from src.utils.exceptions import DomainError

PROB_SUM_TOL = 1e-12
VALUE_MATCH_TOL = 1e-12


@dataclass(frozen=True)
class DiscreteDist:
    """
    Distribution over a strictly increasing finite support.

    Attributes:
        support: Ascending support values
        probs: Probability of each support value (same length, sums to 1)
        name: Optional label used in reports

    Example:
        >>> dist = DiscreteDist((1.0, 2.0), (0.5, 0.5))
        >>> dist.mean()
        1.5
        >>> dist.virtual_value(1.0)
        0.0
    """

    support: Tuple[float, ...]
    probs: Tuple[float, ...]
    name: str = field(default='', compare=False)

    def __post_init__(self):
        support = tuple(float(v) for v in self.support)
        probs = tuple(float(p) for p in self.probs)
        object.__setattr__(self, 'support', support)
        object.__setattr__(self, 'probs', probs)

        if not support:
            raise DomainError("DiscreteDist needs at least one support point")
        if len(support) != len(probs):
            raise DomainError(
                f"support and probs differ in length: {len(support)} vs {len(probs)}"
            )
        if not all(np.isfinite(support)):
            raise DomainError(f"support values must be finite: {support}")
        if any(b <= a for a, b in zip(support, support[1:])):
            raise DomainError(f"support must be strictly increasing: {support}")
        if any(p < 0 for p in probs):
            raise DomainError(f"probabilities must be non-negative: {probs}")
        total = float(np.sum(probs))
        if abs(total - 1.0) > PROB_SUM_TOL:
            raise DomainError(f"probabilities sum to {total!r}, expected 1")

    # ------------------------------------------------------------------
    # Constructors
    # ------------------------------------------------------------------
    @classmethod
    def point_mass(cls, value: float, name: str = '') -> 'DiscreteDist':
        """Degenerate distribution at ``value``."""
        return cls((value,), (1.0,), name=name)

    @classmethod
    def uniform(cls, values: Iterable[float], name: str = '') -> 'DiscreteDist':
        """Uniform distribution over the given distinct values."""
        ordered = sorted(float(v) for v in values)
        return cls(tuple(ordered), tuple([1.0 / len(ordered)] * len(ordered)), name=name)

    @classmethod
    def from_pairs(cls, pairs: Iterable[Tuple[float, float]], name: str = '') -> 'DiscreteDist':
        """Build from (value, probability) pairs in any order; equal values are merged."""
        merged = {}
        for value, prob in pairs:
            merged[float(value)] = merged.get(float(value), 0.0) + float(prob)
        ordered = sorted(merged)
        return cls(tuple(ordered), tuple(merged[v] for v in ordered), name=name)

    # ------------------------------------------------------------------
    # Accessors
    # ------------------------------------------------------------------
    @property
    def values(self) -> np.ndarray:
        return np.asarray(self.support, dtype=float)

    @property
    def probabilities(self) -> np.ndarray:
        return np.asarray(self.probs, dtype=float)

    def __len__(self) -> int:
        return len(self.support)

    @property
    def lower(self) -> float:
        return self.support[0]

    @property
    def upper(self) -> float:
        return self.support[-1]

    def is_degenerate(self) -> bool:
        """True when a single support point carries all the mass."""
        return int(np.count_nonzero(self.probabilities > 0)) <= 1

    def index_of(self, value: float) -> int:
        """
        Position of ``value`` in the support.

        Raises:
            DomainError: If ``value`` is not a support point
        """
        values = self.values
        pos = int(np.searchsorted(values, value))
        for candidate in (pos - 1, pos):
            if 0 <= candidate < len(values):
                if abs(values[candidate] - value) <= VALUE_MATCH_TOL * max(1.0, abs(value)):
                    return candidate
        raise DomainError(f"value {value!r} is not in the support {self.support}")

    def pmf(self, value: float) -> float:
        try:
            return self.probs[self.index_of(value)]
        except DomainError:
            return 0.0

    def cdf(self, x):
        """P[X ≤ x]; accepts scalars or arrays."""
        cumulative = np.concatenate(([0.0], np.cumsum(self.probabilities)))
        idx = np.searchsorted(self.values, x, side='right')
        result = np.minimum(cumulative[idx], 1.0)
        if np.ndim(result) == 0:
            return float(result)
        return result

    def cdf_below(self, x):
        """P[X < x]."""
        cumulative = np.concatenate(([0.0], np.cumsum(self.probabilities)))
        idx = np.searchsorted(self.values, x, side='left')
        result = np.minimum(cumulative[idx], 1.0)
        if np.ndim(result) == 0:
            return float(result)
        return result

    def sf(self, x):
        """P[X > x], summed from the top to keep small tails exact."""
        tail = np.concatenate((np.cumsum(self.probabilities[::-1])[::-1], [0.0]))
        idx = np.searchsorted(self.values, x, side='right')
        result = np.minimum(tail[idx], 1.0)
        if np.ndim(result) == 0:
            return float(result)
        return result

    def survival_at_least(self, value: float) -> float:
        """P[X ≥ value]."""
        tail = np.concatenate((np.cumsum(self.probabilities[::-1])[::-1], [0.0]))
        idx = int(np.searchsorted(self.values, value, side='left'))
        return float(min(tail[idx], 1.0))

    def successor(self, value: float) -> Optional[float]:
        """Immediately larger support value, or None at the top."""
        idx = self.index_of(value)
        return self.support[idx + 1] if idx + 1 < len(self.support) else None

    def predecessor(self, value: float) -> Optional[float]:
        """Immediately smaller support value, or None at the bottom."""
        idx = self.index_of(value)
        return self.support[idx - 1] if idx > 0 else None

    def mean(self) -> float:
        return float(np.dot(self.values, self.probabilities))

    def expect(self, func) -> float:
        """E[func(X)] for a vectorised ``func``."""
        return float(np.dot(np.asarray(func(self.values), dtype=float), self.probabilities))

    # ------------------------------------------------------------------
    # Transformations
    # ------------------------------------------------------------------
    def scaled(self, factor: float) -> 'DiscreteDist':
        """Distribution of factor·X for factor > 0."""
        if factor <= 0:
            raise DomainError(f"scale factor must be positive, got {factor}")
        return DiscreteDist(tuple(v * factor for v in self.support), self.probs, name=self.name)

    def without_zero_mass(self) -> 'DiscreteDist':
        """Drop support points of zero probability."""
        keep = [(v, p) for v, p in zip(self.support, self.probs) if p > 0]
        return DiscreteDist(tuple(v for v, _ in keep), tuple(p for _, p in keep), name=self.name)

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        """Draw i.i.d. samples with ``rng``."""
        return rng.choice(self.values, size=size, p=self.probabilities)

    # ------------------------------------------------------------------
    # Virtual values
    # ------------------------------------------------------------------
    def virtual_value(self, value: float) -> float:
        """Successor-gap virtual value at a support point."""
        return virtual_value_discrete(self, value)

    def virtual_values(self) -> np.ndarray:
        """Virtual value at every support point; NaN where f(v) = 0."""
        values = self.values
        probs = self.probabilities
        tail_above = np.concatenate((np.cumsum(probs[::-1])[::-1][1:], [0.0]))
        gaps = np.concatenate((np.diff(values), [0.0]))
        with np.errstate(divide='ignore', invalid='ignore'):
            phi = values - gaps * tail_above / probs
        phi[-1] = values[-1] if probs[-1] > 0 else np.nan
        phi[probs <= 0] = np.nan
        return phi

    def is_regular(self, tol: float = 1e-12) -> bool:
        """True when virtual values are non-decreasing over positive-mass points."""
        phi = self.virtual_values()
        phi = phi[~np.isnan(phi)]
        return bool(np.all(np.diff(phi) >= -tol * np.maximum(1.0, np.abs(phi[:-1]))))

    def describe(self) -> str:
        label = self.name or 'discrete'
        return f"{label}: {len(self)} points on [{self.lower:g}, {self.upper:g}], mean {self.mean():.6g}"


def virtual_value_discrete(dist: DiscreteDist, value: float) -> float:
    """
    Myerson virtual value of a support point.

    Args:
        dist: The distribution
        value: A support value

    Returns:
        φ(v) = v − (v₊ − v)(1 − F(v))/f(v); the top value maps to itself

    Raises:
        DomainError: If ``value`` is not in the support or has zero mass

    Example:
        >>> virtual_value_discrete(DiscreteDist.uniform([1, 2]), 1.0)
        0.0
    """
    idx = dist.index_of(value)
    mass = dist.probs[idx]
    if mass <= 0:
        raise DomainError(f"virtual value undefined at zero-mass point {value!r}")
    if idx == len(dist.support) - 1:
        return dist.support[idx]
    gap = dist.support[idx + 1] - dist.support[idx]
    tail = float(np.sum(dist.probabilities[idx + 1:]))
    return dist.support[idx] - gap * tail / mass


def product_support_size(dists: Sequence[DiscreteDist]) -> int:
    """Number of joint outcomes of independent draws from ``dists``."""
    size = 1
    for dist in dists:
        size *= len(dist)
    return size
