"""Value distributions, order statistics, hazard rates and virtual values."""

from .continuous import (
    ContinuousDist,
    MhrCheck,
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
from .discrete import DiscreteDist, virtual_value_discrete
from .order_statistics import (
    expected_order_stat,
    harmonic,
    max_hazard_is_monotone,
    monte_carlo_order_stat,
    order_stat_cdf,
    order_stat_survival,
)

__all__ = [
    'ContinuousDist',
    'DiscreteDist',
    'MhrCheck',
    'PiecewiseLinearH',
    'check_mhr',
    'equal_revenue',
    'expected_order_stat',
    'exponential',
    'harmonic',
    'make_continuous',
    'max_hazard_is_monotone',
    'monte_carlo_order_stat',
    'order_stat_cdf',
    'order_stat_survival',
    'truncated_exponential',
    'truncated_weibull',
    'uniform',
    'virtual_value_continuous',
    'virtual_value_discrete',
]
