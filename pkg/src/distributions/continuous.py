"""
Continuous value distributions on an interval of the non-negative reals.

Every family used by the order-statistic checks is built here as a
``ContinuousDist``: vectorised cdf/sf/pdf/ppf closures plus the interval and a
kind tag. Unbounded supports are cut where the survival drops below the tail
tolerance before any quadrature runs.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Optional, Tuple

import numpy as np
from scipy import integrate, optimize

from src.utils.exceptions import DivergenceError, DomainError

logger = logging.getLogger(__name__)

TAIL_TOL = 1e-12
MIN_TAIL_EXPONENT = 1.05
QUAD_ABS = 1e-12
QUAD_REL = 1e-10
MAX_TAIL_SEARCH = 1e200

KINDS = (
    'exponential',
    'uniform',
    'equal-revenue',
    'truncated',
    'piecewise-linear-hazard',
)


@dataclass(frozen=True)
class ContinuousDist:
    """
    A distribution given by closures over ``[lo, hi]``.

    ``hi`` may be ``math.inf``. ``atom_at_hi`` is the probability mass sitting on
    a finite upper end (capped equal revenue, piecewise-linear hazards that stop
    at a finite breakpoint); ``pdf`` describes only the continuous part.
    """

    lo: float
    hi: float
    cdf_fn: Callable = field(repr=False, compare=False)
    pdf_fn: Callable = field(repr=False, compare=False)
    kind: str
    params: Dict[str, Any] = field(default_factory=dict)
    sf_fn: Optional[Callable] = field(default=None, repr=False, compare=False)
    ppf_fn: Optional[Callable] = field(default=None, repr=False, compare=False)
    atom_at_hi: float = 0.0
    name: str = field(default='', compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown distribution kind {self.kind!r}; expected one of {KINDS}")
        if not self.lo >= 0:
            raise DomainError(f"support must be non-negative, got lo={self.lo}")
        if not self.hi > self.lo:
            raise DomainError(f"empty interval [{self.lo}, {self.hi}]")

    @property
    def is_bounded(self) -> bool:
        return math.isfinite(self.hi)

    @property
    def label(self) -> str:
        if self.name:
            return self.name
        args = ','.join(f"{k}={v:g}" for k, v in self.params.items() if v is not None)
        return f"{self.kind}({args})"

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        inside = np.clip(x, self.lo, self.hi if self.is_bounded else np.inf)
        result = np.where(x < self.lo, 0.0, np.where(x >= self.hi, 1.0, self.cdf_fn(inside)))
        return float(result) if result.ndim == 0 else result

    def sf(self, x):
        x = np.asarray(x, dtype=float)
        inside = np.clip(x, self.lo, self.hi if self.is_bounded else np.inf)
        body = self.sf_fn(inside) if self.sf_fn is not None else 1.0 - self.cdf_fn(inside)
        result = np.where(x < self.lo, 1.0, np.where(x >= self.hi, 0.0, body))
        return float(result) if result.ndim == 0 else result

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        inside = np.clip(x, self.lo, self.hi if self.is_bounded else np.inf)
        result = np.where((x < self.lo) | (x >= self.hi), 0.0, self.pdf_fn(inside))
        return float(result) if result.ndim == 0 else result

    def hazard(self, x):
        """h(x) = f(x) / (1 − F(x)); +inf where the survival vanishes."""
        f = np.asarray(self.pdf(x), dtype=float)
        s = np.asarray(self.sf(x), dtype=float)
        with np.errstate(divide='ignore', invalid='ignore'):
            result = np.where(s > 0, f / np.where(s > 0, s, 1.0), np.inf)
        return float(result) if result.ndim == 0 else result

    def ppf(self, q):
        """Inverse cdf; closed form where the family has one, bracketing otherwise."""
        q = np.asarray(q, dtype=float)
        if self.ppf_fn is not None:
            result = self.ppf_fn(q)
        else:
            upper = self.effective_upper()
            result = np.vectorize(
                lambda p: optimize.brentq(lambda t: self.cdf(t) - p, self.lo, upper)
                if 0 < p < self.cdf(upper) else (self.lo if p <= 0 else upper)
            )(q)
        result = np.asarray(result, dtype=float)
        return float(result) if result.ndim == 0 else result

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        """Inverse-transform sampling with ``rng``."""
        return np.asarray(self.ppf(rng.random(size)), dtype=float)

    def effective_upper(self, tail: float = TAIL_TOL) -> float:
        """``hi`` when finite, otherwise the first point where 1 − F drops below ``tail``."""
        if self.is_bounded:
            return self.hi
        return tail_point(self.sf, self.lo, tail)

    def mean(self, tail: float = TAIL_TOL) -> float:
        return integrate_survival(self.sf, self.lo, self.hi, tail=tail, label=self.label)

    def describe(self) -> str:
        return f"{self.label} on [{self.lo:g}, {self.hi:g}]"


# ----------------------------------------------------------------------
# Quadrature helpers
# ----------------------------------------------------------------------
def tail_point(sf: Callable, lo: float, tail: float = TAIL_TOL) -> float:
    """
    Smallest x (to bracketing precision) with sf(x) < tail on an unbounded support.

    Raises:
        DivergenceError: If the survival never drops below ``tail``
    """
    previous = lo
    x = lo + 1.0
    while float(sf(x)) >= tail:
        previous = x
        x = lo + 2.0 * (x - lo)
        if x > MAX_TAIL_SEARCH:
            raise DivergenceError(f"survival stays above {tail:g} beyond {MAX_TAIL_SEARCH:g}")
    if float(sf(previous)) < tail:
        return previous
    return optimize.brentq(lambda t: float(sf(t)) - tail, previous, x, xtol=1e-12, rtol=1e-12)


def integrate_survival(
    sf: Callable,
    lo: float,
    hi: float,
    tail: float = TAIL_TOL,
    epsabs: float = QUAD_ABS,
    epsrel: float = QUAD_REL,
    label: str = '',
) -> float:
    """
    E[X] = lo + ∫_lo^U sf(x) dx for a variable supported on [lo, hi], lo ≥ 0.

    U is ``hi`` when finite, else the tail point of ``sf``. The integral runs
    over geometric subintervals lo + step·2^k so that both the bulk and slowly
    decaying tails get their own ``quad`` call. Past U the survival is treated
    as a power law c·x^{−α} with α read off sf(U)/sf(2U), which adds
    U·sf(U)/(α − 1) for heavy tails and nothing measurable for light ones.

    Raises:
        DivergenceError: If the tail decays like 1/x or slower, as for the top
            order statistic of an untruncated equal-revenue law
    """
    if lo < 0:
        raise DomainError(f"survival integration needs a non-negative support, got lo={lo}")
    tail_mass = 0.0
    if math.isfinite(hi):
        upper = hi
    else:
        upper = tail_point(sf, lo, tail)
        at_upper = float(sf(upper))
        at_double = float(sf(2.0 * upper))
        if at_upper > 0:
            exponent = math.inf if at_double <= 0 else math.log(at_upper / at_double) / math.log(2.0)
            if exponent <= MIN_TAIL_EXPONENT:
                raise DivergenceError(
                    f"expectation of {label or 'distribution'} diverges: "
                    f"survival decays like x^-{exponent:.3g} beyond x = {upper:.3g}"
                )
            tail_mass = upper * at_upper / (exponent - 1.0)

    width = upper - lo
    step = min(1.0, width)
    total = 0.0
    a = lo
    b = lo + step
    while a < upper:
        b = min(b, upper)
        value, _ = integrate.quad(
            lambda t: float(sf(t)), a, b, epsabs=epsabs, epsrel=epsrel, limit=200
        )
        total += value
        a = b
        b = lo + 2.0 * (b - lo)
    return lo + total + tail_mass


# ----------------------------------------------------------------------
# Families
# ----------------------------------------------------------------------
def exponential(rate: float = 1.0) -> ContinuousDist:
    """Exp(rate) on [0, ∞)."""
    if rate <= 0:
        raise DomainError(f"exponential rate must be positive, got {rate}")
    return ContinuousDist(
        lo=0.0,
        hi=math.inf,
        cdf_fn=lambda x: -np.expm1(-rate * x),
        pdf_fn=lambda x: rate * np.exp(-rate * x),
        sf_fn=lambda x: np.exp(-rate * x),
        ppf_fn=lambda q: -np.log1p(-q) / rate,
        kind='exponential',
        params={'rate': rate},
    )


def truncated_exponential(rate: float = 1.0, upper: float = 50.0) -> ContinuousDist:
    """Exp(rate) conditioned on X ≤ upper (renormalised); keeps monotone hazard."""
    if rate <= 0 or upper <= 0:
        raise DomainError(f"truncated exponential needs rate, upper > 0, got {rate}, {upper}")
    mass = -math.expm1(-rate * upper)

    return ContinuousDist(
        lo=0.0,
        hi=float(upper),
        cdf_fn=lambda x: -np.expm1(-rate * x) / mass,
        pdf_fn=lambda x: rate * np.exp(-rate * x) / mass,
        sf_fn=lambda x: -np.exp(-rate * x) * np.expm1(-rate * (upper - x)) / mass,
        ppf_fn=lambda q: np.minimum(-np.log1p(-q * mass) / rate, upper),
        kind='truncated',
        params={'base': 'exponential', 'rate': rate, 'upper': upper},
    )


def uniform(a: float = 0.0, b: float = 1.0) -> ContinuousDist:
    """Uniform[a, b]."""
    if not b > a:
        raise DomainError(f"uniform needs a < b, got [{a}, {b}]")
    width = b - a
    return ContinuousDist(
        lo=float(a),
        hi=float(b),
        cdf_fn=lambda x: (x - a) / width,
        pdf_fn=lambda x: np.full_like(np.asarray(x, dtype=float), 1.0 / width),
        sf_fn=lambda x: (b - x) / width,
        ppf_fn=lambda q: a + q * width,
        kind='uniform',
        params={'a': a, 'b': b},
    )


def equal_revenue(upper: Optional[float] = None) -> ContinuousDist:
    """
    F(x) = 1 − 1/x on [1, upper) with the remaining mass 1/upper on ``upper``.

    Every posted price p earns p·(1/p) = 1. Without ``upper`` the law is the
    untruncated one, whose mean and top order statistic diverge.
    """
    if upper is not None and upper <= 1:
        raise DomainError(f"equal revenue cap must exceed 1, got {upper}")
    hi = math.inf if upper is None else float(upper)

    def ppf(q):
        values = 1.0 / (1.0 - np.minimum(q, np.nextafter(1.0, 0.0)))
        return np.minimum(values, hi)

    return ContinuousDist(
        lo=1.0,
        hi=hi,
        cdf_fn=lambda x: 1.0 - 1.0 / x,
        pdf_fn=lambda x: 1.0 / np.square(x),
        sf_fn=lambda x: 1.0 / x,
        ppf_fn=ppf,
        kind='equal-revenue',
        params={'upper': upper},
        atom_at_hi=0.0 if upper is None else 1.0 / upper,
    )


def truncated_weibull(shape: float = 2.0, scale: float = 1.0, upper: float = 10.0) -> ContinuousDist:
    """Weibull(shape, scale) conditioned on X ≤ upper; MHR for shape ≥ 1."""
    if shape < 1 or scale <= 0 or upper <= 0:
        raise DomainError(
            f"truncated Weibull needs shape ≥ 1 and positive scale/upper, got {shape}, {scale}, {upper}"
        )
    top = (upper / scale) ** shape
    mass = -math.expm1(-top)

    def sf(x):
        z = np.power(np.asarray(x, dtype=float) / scale, shape)
        return -np.exp(-z) * np.expm1(-(top - z)) / mass

    def pdf(x):
        x = np.asarray(x, dtype=float)
        z = np.power(x / scale, shape)
        return (shape / scale) * np.power(x / scale, shape - 1.0) * np.exp(-z) / mass

    def ppf(q):
        inner = -np.log1p(-np.asarray(q, dtype=float) * mass)
        return np.minimum(scale * np.power(inner, 1.0 / shape), upper)

    return ContinuousDist(
        lo=0.0,
        hi=float(upper),
        cdf_fn=lambda x: -np.expm1(-np.power(np.asarray(x, dtype=float) / scale, shape)) / mass,
        pdf_fn=pdf,
        sf_fn=sf,
        ppf_fn=ppf,
        kind='truncated',
        params={'base': 'weibull', 'shape': shape, 'scale': scale, 'upper': upper},
    )


# ----------------------------------------------------------------------
# Piecewise-linear cumulative hazard
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class PiecewiseLinearH:
    """
    Convex piecewise-linear cumulative hazard H with F(x) = 1 − e^{−H(x)}.

    Attributes:
        breakpoints: x₀ < x₁ < … < x_{c+1}; the last entry may be ``inf``
        slopes: a₀ ≤ a₁ ≤ … ≤ a_c, all positive, one per segment
        start_value: H(x₀) (0 for the canonical H(0) = 0 form)

    The intercepts bᵢ follow from continuity at the breakpoints.

    Example:
        >>> h = PiecewiseLinearH((0.0, 1.0, 2.0), (1.0, 3.0))
        >>> h.value(2.0)
        4.0
    """

    breakpoints: Tuple[float, ...]
    slopes: Tuple[float, ...]
    start_value: float = 0.0

    def __post_init__(self):
        breakpoints = tuple(float(x) for x in self.breakpoints)
        slopes = tuple(float(a) for a in self.slopes)
        object.__setattr__(self, 'breakpoints', breakpoints)
        object.__setattr__(self, 'slopes', slopes)

        if len(breakpoints) != len(slopes) + 1:
            raise DomainError(
                f"need one more breakpoint than slopes, got {len(breakpoints)} and {len(slopes)}"
            )
        if breakpoints[0] < 0 or self.start_value < 0:
            raise DomainError("H must start at a non-negative point with a non-negative value")
        if any(b <= a for a, b in zip(breakpoints, breakpoints[1:])):
            raise DomainError(f"breakpoints must increase strictly: {breakpoints}")
        if any(not math.isfinite(x) for x in breakpoints[:-1]):
            raise DomainError("only the last breakpoint may be infinite")
        if any(a <= 0 for a in slopes):
            raise DomainError(f"slopes must be positive: {slopes}")
        if any(b < a for a, b in zip(slopes, slopes[1:])):
            raise DomainError(f"slopes must be non-decreasing (convex H): {slopes}")

    @property
    def segments(self) -> int:
        return len(self.slopes)

    @property
    def intercepts(self) -> Tuple[float, ...]:
        """bᵢ with H(x) = aᵢx + bᵢ on [xᵢ, xᵢ₊₁]."""
        values = self.knot_values()
        return tuple(values[i] - a * self.breakpoints[i] for i, a in enumerate(self.slopes))

    def knot_values(self) -> Tuple[float, ...]:
        """H at every breakpoint (inf at an infinite end)."""
        values = [self.start_value]
        for i, a in enumerate(self.slopes):
            width = self.breakpoints[i + 1] - self.breakpoints[i]
            values.append(values[-1] + a * width)
        return tuple(values)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        knots = np.asarray(self.breakpoints[:-1])
        idx = np.clip(np.searchsorted(knots, x, side='right') - 1, 0, self.segments - 1)
        result = (
            np.asarray(self.knot_values()[:-1])[idx]
            + np.asarray(self.slopes)[idx] * (x - knots[idx])
        )
        return float(result) if result.ndim == 0 else result

    def slope_at(self, x):
        """Right derivative of H; this is the hazard rate of the reconstructed law."""
        x = np.asarray(x, dtype=float)
        knots = np.asarray(self.breakpoints[:-1])
        idx = np.clip(np.searchsorted(knots, x, side='right') - 1, 0, self.segments - 1)
        result = np.asarray(self.slopes)[idx]
        return float(result) if np.ndim(result) == 0 else result

    def inverse(self, y):
        """x with H(x) = y, for start_value ≤ y < H(end)."""
        y = np.asarray(y, dtype=float)
        knots = np.asarray(self.knot_values()[:-1])
        idx = np.clip(np.searchsorted(knots, y, side='right') - 1, 0, self.segments - 1)
        result = np.asarray(self.breakpoints[:-1])[idx] + (y - knots[idx]) / np.asarray(self.slopes)[idx]
        return float(result) if result.ndim == 0 else result

    def to_distribution(self) -> ContinuousDist:
        """F(x) = 1 − e^{−H(x)} on [x₀, x_{c+1}); leftover mass e^{−H(end)} sits on a finite end."""
        lo = self.breakpoints[0]
        hi = self.breakpoints[-1]
        end_value = self.knot_values()[-1]
        if self.start_value != 0:
            raise DomainError("a distribution needs H(x₀) = 0")
        top_cdf = -math.expm1(-end_value) if math.isfinite(end_value) else 1.0

        def ppf(q):
            q = np.minimum(np.asarray(q, dtype=float), np.nextafter(1.0, 0.0))
            inside = q < top_cdf
            target = -np.log1p(-np.where(inside, q, 0.0))
            return np.where(inside, self.inverse(target), hi)

        return ContinuousDist(
            lo=lo,
            hi=hi,
            cdf_fn=lambda x: -np.expm1(-self.value(x)),
            pdf_fn=lambda x: self.slope_at(x) * np.exp(-self.value(x)),
            sf_fn=lambda x: np.exp(-self.value(x)),
            ppf_fn=ppf,
            kind='piecewise-linear-hazard',
            params={'segments': self.segments},
            atom_at_hi=0.0 if not math.isfinite(end_value) else math.exp(-end_value),
        )

    @classmethod
    def random(
        cls,
        rng: np.random.Generator,
        pieces: int = 4,
        bounded: bool = False,
    ) -> 'PiecewiseLinearH':
        """
        Random valid H from ``rng``: ascending positive slopes, H(0) = 0.

        Segment widths and slopes are drawn on a log scale so that both
        near-point-mass and slowly rising hazards show up in property runs.
        """
        widths = np.exp(rng.uniform(np.log(0.01), np.log(5.0), size=pieces))
        slopes = np.sort(np.exp(rng.uniform(np.log(0.01), np.log(50.0), size=pieces + 1)))
        breakpoints = np.concatenate(([0.0], np.cumsum(widths)))
        end = breakpoints[-1] + float(np.exp(rng.uniform(np.log(0.01), np.log(5.0)))) if bounded else math.inf
        return cls(tuple(breakpoints) + (end,), tuple(slopes))


def from_piecewise_hazard(h: PiecewiseLinearH) -> ContinuousDist:
    return h.to_distribution()


# ----------------------------------------------------------------------
# Virtual values and MHR checks
# ----------------------------------------------------------------------
def virtual_value_continuous(dist: ContinuousDist, value: float) -> float:
    """
    φ(v) = v − (1 − F(v)) / f(v).

    Raises:
        DomainError: If f(v) = 0

    Example:
        >>> virtual_value_continuous(uniform(0.0, 1.0), 0.75)
        0.5
    """
    density = float(dist.pdf(value))
    if density <= 0:
        raise DomainError(f"virtual value undefined where f({value:g}) = 0 for {dist.label}")
    return float(value - dist.sf(value) / density)


@dataclass(frozen=True)
class MhrCheck:
    """Outcome of a monotone-hazard scan."""

    is_mhr: bool
    max_violation: float
    grid_points: int


def hazard_scan(hazard_values: np.ndarray, tol: float, points: int) -> MhrCheck:
    if len(hazard_values) < 2:
        return MhrCheck(True, 0.0, points)
    drops = (hazard_values[:-1] - hazard_values[1:]) / np.maximum(1.0, np.abs(hazard_values[:-1]))
    worst = float(max(0.0, np.max(drops)))
    return MhrCheck(worst <= tol, worst, points)


def check_mhr(dist, grid_size: int = 2000, tol: float = 1e-9, tail: float = TAIL_TOL) -> MhrCheck:
    """
    Scan the hazard rate on a grid and report the largest relative drop.

    Points where 1 − F ≤ ``tail`` are skipped, as is the upper end itself
    (where an atom may sit).

    Raises:
        DomainError: For discrete input; only continuous laws are adjudicated
    """
    if not isinstance(dist, ContinuousDist):
        raise DomainError("check_mhr is defined for continuous distributions only")
    upper = dist.effective_upper(tail)
    grid = np.linspace(dist.lo, upper, grid_size + 1)[:-1]
    survival = np.asarray(dist.sf(grid), dtype=float)
    grid = grid[survival > tail]
    hazard = np.asarray(dist.hazard(grid), dtype=float)
    result = hazard_scan(hazard, tol, len(grid))
    if not result.is_mhr:
        logger.debug(f"hazard of {dist.label} drops by {result.max_violation:.3g}")
    return result


def is_regular(dist: ContinuousDist, grid_size: int = 2000, tol: float = 1e-9) -> bool:
    """True when φ is non-decreasing on a grid of positive-density points."""
    upper = dist.effective_upper()
    grid = np.linspace(dist.lo, upper, grid_size + 1)[:-1]
    density = np.asarray(dist.pdf(grid), dtype=float)
    grid = grid[density > 0]
    phi = grid - np.asarray(dist.sf(grid), dtype=float) / np.asarray(dist.pdf(grid), dtype=float)
    drops = (phi[:-1] - phi[1:]) / np.maximum(1.0, np.abs(phi[:-1]))
    return bool(len(drops) == 0 or np.max(drops) <= tol)


def make_continuous(kind: str, **params) -> ContinuousDist:
    """
    Build a distribution from a declaration (kind plus keyword parameters).

    Raises:
        DomainError: For unknown kinds or bad parameters
    """
    base = params.pop('base', None)
    if kind == 'exponential':
        return exponential(**params)
    if kind == 'uniform':
        return uniform(**params)
    if kind == 'equal-revenue':
        return equal_revenue(**params)
    if kind == 'truncated':
        if base == 'exponential':
            return truncated_exponential(**params)
        if base == 'weibull':
            return truncated_weibull(**params)
        raise DomainError(f"truncated distributions need base exponential or weibull, got {base!r}")
    if kind == 'piecewise-linear-hazard':
        return PiecewiseLinearH(
            tuple(params['breakpoints']),
            tuple(params['slopes']),
        ).to_distribution()
    raise DomainError(f"unknown distribution kind {kind!r}; expected one of {KINDS}")
