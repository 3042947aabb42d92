"""
Named instances with their reference values.

- ``doubling_instance``: two regular stages where a dynamic mechanism earns
  E[X₁] while the static per-stage optimum stays below 4.
- ``correlation_helps_instance``: negative correlation between the stages lets a
  two-option menu beat every mechanism on the independent marginals.
- ``correlation_hurts_instance``: positive correlation (X₂ = 2^{X₁}) caps revenue at 3,
  below what the independent marginals allow.
- ``random_independent_instance``: small random discrete instances for the
  bound-ordering property runs.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np
import pandas as pd

from src.auctions.myerson import myerson_revenue
from src.distributions.discrete import DiscreteDist
from src.mechanisms.constructions import menu_choice, menu_option
from src.mechanisms.process import DynamicInstance, ValueProcess
from src.utils.exceptions import DomainError, SizeLimitError

logger = logging.getLogger(__name__)

DOUBLING_MAX_DEPTH = 5
MENU_TOL = 1e-9


@dataclass(frozen=True)
class ReferenceInstance:
    """An instance plus the closed-form values it is known for."""

    instance: DynamicInstance
    reference: Dict[str, float] = field(default_factory=dict)
    parameter: int = 0


def _halving_law(values: List[float], name: str) -> DiscreteDist:
    """P[values[i]] = 2^{−(i+1)}, the last value taking the leftover mass 2^{−(len−1)}."""
    count = len(values)
    probs = [2.0 ** -(i + 1) for i in range(count - 1)] + [2.0 ** -(count - 1)]
    return DiscreteDist(tuple(values), tuple(probs), name=name)


# ----------------------------------------------------------------------
# Two regular stages, unbounded competition complexity
# ----------------------------------------------------------------------
def _doubling_stage(depth: int, name: str) -> DiscreteDist:
    """Support {0, 2, 4, …, 2^depth}; P[2^i] = 2^{−i}, P[0] = 2^{−depth}."""
    support = (0.0,) + tuple(2.0 ** i for i in range(1, depth + 1))
    probs = (2.0 ** -depth,) + tuple(2.0 ** -i for i in range(1, depth + 1))
    return DiscreteDist(support, probs, name=name)


def doubling_instance(depth: int, max_depth: int = DOUBLING_MAX_DEPTH) -> ReferenceInstance:
    """
    Stage 1 at the given depth, stage 2 at depth 2^depth, one buyer, independent.

    Reference values: E[X₁] = depth (what the pay-your-report mechanism
    earns), E[X₂] = 2^depth, Mye[X₁] = 2 − 2^{1−depth}, Mye[X₂] = 2 − 2^{1−2^depth}.

    Raises:
        DomainError: If depth < 1
        SizeLimitError: If depth exceeds ``max_depth``
    """
    if depth < 1:
        raise DomainError(f"depth must be at least 1, got {depth}")
    if depth > max_depth:
        raise SizeLimitError(
            f"depth {depth} gives a stage-2 support of {2 ** depth + 1} points; the cap is depth {max_depth}"
        )
    first = _doubling_stage(depth, f"doubling-stage1-d{depth}")
    second = _doubling_stage(2 ** depth, f"doubling-stage2-d{depth}")
    instance = DynamicInstance(1, ValueProcess.independent_stages([first, second]), name=f"doubling-depth{depth}")
    reference = {
        'expected_first': float(depth),
        'expected_second': float(2 ** depth),
        'myerson_first': myerson_revenue(first, 1),
        'myerson_second': myerson_revenue(second, 1),
    }
    reference['static_total'] = reference['myerson_first'] + reference['myerson_second']
    return ReferenceInstance(instance, reference, depth)


# ----------------------------------------------------------------------
# Non-monotonicity in correlation
# ----------------------------------------------------------------------
def correlation_helps_instance(level: int, correlated: bool = True) -> ReferenceInstance:
    """
    Correlation helps: X₁ = 2^{level+i} w.p. 2^{−i} (i ≤ level), 2^{2·level+1}
    w.p. 2^{−level}. The lowest type keeps X₂ = 2^{level+1}; type 2^{level+i}
    (i ≥ 2) has X₂ = 2^{level+2−i}.

    Raises:
        DomainError: If level < 2
    """
    if level < 2:
        raise DomainError(f"the correlation-helps construction needs level ≥ 2, got {level}")
    first_values = [2.0 ** (level + i) for i in range(1, level + 2)]
    first = _halving_law(first_values, f"corr-helps-stage1-l{level}")
    partner = {first_values[0]: 2.0 ** (level + 1)}
    for i in range(2, level + 2):
        partner[2.0 ** (level + i)] = 2.0 ** (level + 2 - i)

    if correlated:
        conditionals = {(v,): DiscreteDist.point_mass(w) for v, w in partner.items()}
        process = ValueProcess.correlated(first, conditionals)
        name = f"correlation-helps-l{level}"
    else:
        pairs = [(partner[v], p) for v, p in zip(first.support, first.probs)]
        second = DiscreteDist.from_pairs(pairs, name=f"corr-helps-stage2-l{level}")
        process = ValueProcess.independent_stages([first, second])
        name = f"correlation-helps-independent-l{level}"

    reference = {
        'menu_revenue': 2.0 ** (level - 1) + 2.0 ** level + 2.0 ** (level + 1),
        'independent_bound': 2.0 ** (level + 1) + (4.0 / 3.0) * 2.0 ** level + (2.0 / 3.0) * 2.0 ** -level,
    }
    return ReferenceInstance(DynamicInstance(1, process, name=name), reference, level)


def correlation_hurts_instance(level: int, correlated: bool = True) -> ReferenceInstance:
    """
    Correlation hurts: X₁ = i w.p. 2^{−i} (i ≤ level), level+1 w.p. 2^{−level};
    X₂ = 2^{X₁} (correlated) or an independent copy of that law.

    Reference values: correlated optimum 3, independent lower bound
    E[X₁] + Mye[X₂] = 4 − 2^{−level}.
    """
    if level < 1:
        raise DomainError(f"level must be at least 1, got {level}")
    values = [float(i) for i in range(1, level + 2)]
    first = _halving_law(values, f"corr-hurts-stage1-l{level}")
    if correlated:
        process = ValueProcess.correlated(first, {(v,): DiscreteDist.point_mass(2.0 ** v) for v in values})
        name = f"correlation-hurts-l{level}"
    else:
        second = _halving_law([2.0 ** v for v in values], f"corr-hurts-stage2-l{level}")
        process = ValueProcess.independent_stages([first, second])
        name = f"correlation-hurts-independent-l{level}"
    reference = {
        'correlated_opt': 3.0,
        'expected_first': 2.0 - 2.0 ** -level,
        'myerson_second': 2.0,
        'independent_lower': 4.0 - 2.0 ** -level,
    }
    return ReferenceInstance(DynamicInstance(1, process, name=name), reference, level)


@dataclass(frozen=True)
class NonmonotonicityCase:
    name: str
    correlated: ReferenceInstance
    independent: ReferenceInstance


def nonmonotonicity_instances(level: int) -> Tuple[NonmonotonicityCase, NonmonotonicityCase]:
    """Both constructions at ``level``, each with its independent-marginal twin."""
    return (
        NonmonotonicityCase(
            'correlation-helps',
            correlation_helps_instance(level, correlated=True),
            correlation_helps_instance(level, correlated=False),
        ),
        NonmonotonicityCase(
            'correlation-hurts',
            correlation_hurts_instance(level, correlated=True),
            correlation_hurts_instance(level, correlated=False),
        ),
    )


def menu_best_responses(level: int) -> pd.DataFrame:
    """
    Enumerate every stage-1 type of the correlation-helps instance against
    both menu options.

    A type's utility from an option is v₁·(stage-1 chance) − fee plus
    max(0, v₂ − stage-2 price). The assigned option must be in the argmax set
    (within 1e-9) and satisfy stage-1 ex-post IR.

    Returns:
        DataFrame with one row per type and an ``ok`` column
    """
    case = correlation_helps_instance(level, correlated=True)
    process = case.instance.process
    rows = []
    for i, first_value in enumerate(process.supports[0]):
        second_value = process.values_of((i, int(np.argmax(process.conditional((i,))))))[1]
        utilities, stage_one = {}, {}
        for option in (1, 2):
            chance, fee, price = menu_option(level, option)
            stage_one[option] = first_value * chance - fee
            utilities[option] = stage_one[option] + max(0.0, second_value - price)
        best = max(utilities.values())
        argmax = [o for o in (1, 2) if utilities[o] >= best - MENU_TOL]
        assigned = menu_choice(level, first_value)
        rows.append({
            'first_value': first_value,
            'second_value': second_value,
            'probability': float(process.first[i]),
            'option1_utility': utilities[1],
            'option2_utility': utilities[2],
            'best_options': ','.join(str(o) for o in argmax),
            'assigned': assigned,
            'stage1_ir': stage_one[assigned] >= -MENU_TOL,
            'ok': assigned in argmax and stage_one[assigned] >= -MENU_TOL,
        })
    return pd.DataFrame.from_records(rows)


# ----------------------------------------------------------------------
# Random small instances
# ----------------------------------------------------------------------
def random_discrete(rng: np.random.Generator, max_size: int = 4, high: int = 10, name: str = '') -> DiscreteDist:
    size = int(rng.integers(1, max_size + 1))
    support = np.sort(rng.choice(np.arange(1, high + 1), size=size, replace=False)).astype(float)
    probs = rng.dirichlet(np.ones(size))
    probs = probs / probs.sum()
    return DiscreteDist(tuple(support), tuple(probs), name=name)


def random_independent_instance(
    rng: np.random.Generator,
    max_buyers: int = 2,
    max_stages: int = 3,
    max_support: int = 4,
) -> DynamicInstance:
    """Random discrete instance with independent stages."""
    n = int(rng.integers(1, max_buyers + 1))
    m = int(rng.integers(1, max_stages + 1))
    stages = [random_discrete(rng, max_support, name=f"stage{k + 1}") for k in range(m)]
    return DynamicInstance(n, ValueProcess.independent_stages(stages), name=f"random-n{n}-m{m}")
