"""
Hand-built mechanisms, expressed in the LP's table layout so that
``verify_mechanism`` can check them row by row.

Each builder takes a rule (stage, per-buyer value histories) -> (allocations,
payments) and tabulates it over every profile history, zero-probability ones
included.
"""

import logging
import math
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from src.auctions.myerson import ironed_virtuals
from src.distributions.discrete import DiscreteDist
from src.distributions.order_statistics import expected_order_stat
from src.mechanisms.history import HistoryIndex
from src.mechanisms.process import DynamicInstance
from src.mechanisms.solver import MechanismSolution
from src.utils.exceptions import DomainError

logger = logging.getLogger(__name__)

ValueHistories = Sequence[Tuple[float, ...]]
Rule = Callable[[int, ValueHistories], Tuple[Sequence[float], Sequence[float]]]


def mechanism_from_rule(instance: DynamicInstance, rule: Rule, label: str) -> MechanismSolution:
    """Tabulate ``rule`` over all profile histories of ``instance``."""
    index = HistoryIndex(instance)
    allocation = np.zeros(index.x_count)
    payment = np.zeros(index.x_count)
    for k in range(index.m):
        for profile in range(index.profiles[k]):
            histories = index.profile_histories(k, profile)
            values = [index.process.values_of(index.decode(k, h)) for h in histories]
            x, p = rule(k, values)
            for buyer in range(index.n):
                column = index.x_column(k, profile, buyer)
                allocation[column] = x[buyer]
                payment[column] = p[buyer]
    solution = MechanismSolution(index, allocation, payment, 0.0, label=label, method='construction')
    solution.objective = solution.expected_revenue()
    logger.debug(f"✓ {label}: revenue {solution.objective:.12g}")
    return solution


def _require_single_buyer(instance: DynamicInstance, m: Optional[int] = None) -> None:
    if instance.n != 1:
        raise DomainError(f"this mechanism is defined for one buyer, got n={instance.n}")
    if m is not None and instance.m != m:
        raise DomainError(f"this mechanism is defined for {m} stages, got m={instance.m}")


# ----------------------------------------------------------------------
# Stage-wise Myerson
# ----------------------------------------------------------------------
def _virtual_lookup(marginal: DiscreteDist) -> Callable[[float], float]:
    """Ironed virtual value by support value; zero-mass points borrow from the next lower point."""
    table = ironed_virtuals(marginal).as_dict()
    ordered = sorted(table)

    def lookup(value: float) -> float:
        if value in table:
            return table[value]
        lower = [v for v in ordered if v < value]
        return table[lower[-1]] if lower else -math.inf

    return lookup


def _highest_virtual_allocation(virtuals: Sequence[float]) -> List[float]:
    best = max(virtuals)
    if best <= 0:
        return [0.0] * len(virtuals)
    winners = [b for b, phi in enumerate(virtuals) if phi == best]
    return [1.0 / len(winners) if b in winners else 0.0 for b in range(len(virtuals))]


def stagewise_myerson_mechanism(instance: DynamicInstance) -> MechanismSolution:
    """
    Run the static optimal auction of each stage's marginal, independently per stage.

    The item goes to the highest positive ironed virtual value (uniform among
    ties) and winners pay the discrete threshold
    p(v) = v·x(v) − Σ_{t<v} x(t)·(t₊ − t). Stage outcomes ignore past reports,
    so periodic IC reduces to dominant-strategy IC stage by stage.
    """
    supports = [instance.process.supports[k] for k in range(instance.m)]
    lookups = [_virtual_lookup(d) for d in instance.marginals()]

    def rule(k: int, values: ValueHistories):
        current = [h[-1] for h in values]
        lookup = lookups[k]
        allocation = _highest_virtual_allocation([lookup(v) for v in current])
        payment = []
        for b, v in enumerate(current):
            if allocation[b] == 0:
                payment.append(0.0)
                continue
            total = v * allocation[b]
            below = [t for t in supports[k] if t < v]
            for pos, t in enumerate(below):
                successor = below[pos + 1] if pos + 1 < len(below) else v
                trial = list(current)
                trial[b] = t
                x_t = _highest_virtual_allocation([lookup(u) for u in trial])[b]
                total -= x_t * (successor - t)
            payment.append(total)
        return allocation, payment

    return mechanism_from_rule(instance, rule, 'stagewise-myerson')


# ----------------------------------------------------------------------
# Posted prices and second-price stages
# ----------------------------------------------------------------------
def posted_price_mechanism(instance: DynamicInstance, prices: Sequence[float]) -> MechanismSolution:
    """
    One posted price per stage; buyers at or above the price share the item
    uniformly and each pays price × share.
    """
    if len(prices) != instance.m:
        raise DomainError(f"need one price per stage ({instance.m}), got {len(prices)}")

    def rule(k: int, values: ValueHistories):
        takers = [h[-1] >= prices[k] for h in values]
        count = sum(takers)
        allocation = [1.0 / count if t else 0.0 for t in takers]
        return allocation, [prices[k] * x for x in allocation]

    return mechanism_from_rule(instance, rule, f"posted-prices({', '.join(f'{p:g}' for p in prices)})")


def _second_price(current: Sequence[float]) -> Tuple[List[float], List[float]]:
    top = max(current)
    winners = [b for b, v in enumerate(current) if v == top]
    ranked = sorted(current, reverse=True)
    price = ranked[1] if len(ranked) > 1 else 0.0
    allocation = [1.0 / len(winners) if b in winners else 0.0 for b in range(len(current))]
    return allocation, [price * x for x in allocation]


def second_price_mechanism(instance: DynamicInstance) -> MechanismSolution:
    """Second-price auction at every stage, uniform among tied top bids."""
    return mechanism_from_rule(instance, lambda k, values: _second_price([h[-1] for h in values]), 'second-price')


def ex_ante_surplus_mechanism(instance: DynamicInstance) -> MechanismSolution:
    """
    Entry fee plus second-price auctions: extracts the expected welfare under
    ex-ante IR.

    Stage 1 must be a point mass a. Every buyer gets a 1/n share of the stage-1
    item for a/n plus the fee (1/n)·Σ_{k≥2}(E[(X_k)_{1:n}] − E[(X_k)_{2:n}]),
    which is each buyer's expected surplus from the later second-price stages.
    The fee breaks ex-post IR at stage 1 while keeping ex-ante IR.

    Raises:
        DomainError: If the first stage is not a point mass
    """
    marginals = instance.marginals()
    if len(instance.process.supports[0]) != 1:
        raise DomainError("the entry-fee mechanism needs a point-mass first stage")
    n = instance.n
    a = instance.process.supports[0][0]
    surplus = 0.0
    if n >= 2:
        surplus = sum(expected_order_stat(d, 1, n) - expected_order_stat(d, 2, n) for d in marginals[1:])
    else:
        surplus = sum(d.mean() for d in marginals[1:])
    fee = surplus / n

    def rule(k: int, values: ValueHistories):
        if k == 0:
            return [1.0 / n] * n, [a / n + fee] * n
        return _second_price([h[-1] for h in values])

    return mechanism_from_rule(instance, rule, 'entry-fee-second-price')


# ----------------------------------------------------------------------
# Single-buyer constructions
# ----------------------------------------------------------------------
def pay_your_report_mechanism(instance: DynamicInstance) -> MechanismSolution:
    """
    Pay your stage-1 report v̂ for the stage-1 item; get the stage-2 item for
    free with probability v̂/E[X₂].

    Every report leaves utility exactly v₁, so truth-telling is a best response
    and revenue is E[X₁].

    Raises:
        DomainError: Unless one buyer, two independent stages and max X₁ ≤ E[X₂]
    """
    _require_single_buyer(instance, 2)
    if not instance.independent:
        raise DomainError("the pay-your-report mechanism needs independent stages")
    second_mean = instance.marginals()[1].mean()
    top = max(instance.process.supports[0])
    if top > second_mean * (1 + 1e-12):
        raise DomainError(f"max stage-1 value {top:g} exceeds E[X₂] = {second_mean:g}")

    def rule(k: int, values: ValueHistories):
        reported = values[0][0]
        if k == 0:
            return [1.0], [reported]
        return [reported / second_mean], [0.0]

    return mechanism_from_rule(instance, rule, 'pay-your-report')


def report_price_mechanism(instance: DynamicInstance, level: int) -> MechanismSolution:
    """
    Correlation-hurts construction, independent version: stage-1 price equals
    the report v̂ ∈ {1, …, level+1}; stage 2 posts 2^{level+2−v̂}, which leaves
    expected stage-2 utility v̂ − 1 under the equal-revenue stage-2 law.
    """
    _require_single_buyer(instance, 2)

    def rule(k: int, values: ValueHistories):
        reported = values[0][0]
        if k == 0:
            return [1.0], [reported]
        price = 2.0 ** (level + 2 - reported)
        bought = values[0][1] >= price
        return [1.0 if bought else 0.0], [price if bought else 0.0]

    return mechanism_from_rule(instance, rule, 'report-price')


def menu_option(level: int, option: int) -> Tuple[float, float, float]:
    """(stage-1 probability, stage-1 payment, stage-2 price) of a menu option."""
    if option == 1:
        return 0.5, 2.0 ** level, 2.0 ** (level + 1)
    if option == 2:
        return 1.0, 2.0 ** (level + 2), 0.0
    raise DomainError(f"menu options are 1 and 2, got {option}")


def menu_choice(level: int, first_value: float) -> int:
    """Option assigned to a stage-1 type: the lowest type takes option 1."""
    return 1 if first_value <= 2.0 ** (level + 1) else 2


def menu_mechanism(instance: DynamicInstance, level: int) -> MechanismSolution:
    """
    Correlation-helps construction: option 1 buys the stage-1 item with
    probability 1/2 for 2^level and prices stage 2 at 2^{level+1}; option 2
    pays 2^{level+2} for the stage-1 item and gets stage 2 free. The lowest
    stage-1 type takes option 1, everyone else option 2.
    """
    _require_single_buyer(instance, 2)

    def rule(k: int, values: ValueHistories):
        chance, fee, stage_two_price = menu_option(level, menu_choice(level, values[0][0]))
        if k == 0:
            return [chance], [fee]
        bought = values[0][1] >= stage_two_price
        return [1.0 if bought else 0.0], [stage_two_price if bought else 0.0]

    return mechanism_from_rule(instance, rule, 'two-option-menu')
