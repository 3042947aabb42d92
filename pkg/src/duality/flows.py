"""
Canonical dual flows on a buyer's history tree.

A flow assigns a multiplier λ_k(h, a → b) to the periodic-IC row "at stage k,
after history h, type a does not report b" and κ_k(h) to the stage-k ex-post
IR row at node h. All flows here come from one construction with a chosen
Myerson stage j:

- stages before j: κ_k(h) = f(h), no λ
- stage j: λ_j(h, v → v⁻) = f(h)·P[X_j ≥ v | h] between consecutive
  positive-mass values, κ_j = f(h) at the lowest positive value
- stages after j: κ_k(h) = f(v_k | h_{<k})·κ_{k−1}(h_{<k}), and λ_k carries the
  correlation corrections as cumulative sums from the top of the support;
  these vanish for independent stages and stay non-negative under
  first-order stochastic dominance.

For n buyers the flow of buyer i is the single-buyer flow scaled by the
probability of the other buyers' past profile; that scaling is applied when
flows are mapped onto LP rows (see ``certificates.row_multipliers``).
"""

import itertools
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Tuple

import numpy as np

from src.mechanisms.process import DynamicInstance, IndexHistory, ValueProcess
from src.utils.exceptions import ConfigError, DomainError

logger = logging.getLogger(__name__)

NEGATIVE_TOL = 1e-12

LambdaKey = Tuple[int, IndexHistory, int, int]
KappaKey = Tuple[int, IndexHistory]


@dataclass
class FlowSolution:
    """
    Sparse dual multipliers on a single buyer's history tree.

    Attributes:
        supports: Stage supports the index histories refer to
        n: Number of buyers the flow is meant for
        stage: Myerson stage j (0-based) of a canonical flow, None otherwise
        lam: λ keyed by (stage, index history before the stage, from, to)
        kappa: κ keyed by (stage, index history including the stage)
        label: Display name
    """

    supports: Tuple[Tuple[float, ...], ...]
    n: int = 1
    stage: Optional[int] = None
    lam: Dict[LambdaKey, float] = field(default_factory=dict)
    kappa: Dict[KappaKey, float] = field(default_factory=dict)
    label: str = ''

    @property
    def m(self) -> int:
        return len(self.supports)

    def lam_at(self, k: int, history: IndexHistory, a: int, b: int) -> float:
        return self.lam.get((k, tuple(history), a, b), 0.0)

    def kappa_at(self, k: int, history: IndexHistory) -> float:
        return self.kappa.get((k, tuple(history)), 0.0)

    def min_multiplier(self) -> float:
        values = list(self.lam.values()) + list(self.kappa.values())
        return min(values) if values else 0.0

    def inflows(self, k: int, history: IndexHistory) -> List[Tuple[int, float]]:
        """(from index, λ) of every transfer into the stage-k node ``history``."""
        past, target = tuple(history[:-1]), history[-1]
        return [(a, value) for (s, h, a, b), value in self.lam.items() if s == k and h == past and b == target]

    def check_dimensions(self, instance: DynamicInstance) -> None:
        """
        Raises:
            DomainError: If the flow was built for different supports or buyers
        """
        if self.n != instance.n:
            raise DomainError(f"flow is for n={self.n} buyers, instance has n={instance.n}")
        if tuple(self.supports) != tuple(instance.process.supports):
            raise DomainError(
                f"flow supports {self.supports} do not match the instance supports {instance.process.supports}"
            )

    # ------------------------------------------------------------------
    # Documents
    # ------------------------------------------------------------------
    def to_document(self) -> Dict[str, Any]:
        """Entries carry stage (1-based), value history and endpoints as values."""

        def values(k: int, history: IndexHistory) -> List[float]:
            return [self.supports[t][i] for t, i in enumerate(history)]

        entries = []
        for (k, history, a, b), value in sorted(self.lam.items()):
            entries.append({
                'kind': 'lambda',
                'stage': k + 1,
                'history': values(k, history),
                'from': self.supports[k][a],
                'to': self.supports[k][b],
                'value': value,
            })
        for (k, history), value in sorted(self.kappa.items()):
            entries.append({'kind': 'kappa', 'stage': k + 1, 'history': values(k, history), 'value': value})
        doc = {
            'label': self.label,
            'n': self.n,
            'supports': [list(s) for s in self.supports],
            'entries': entries,
        }
        if self.stage is not None:
            doc['myerson_stage'] = self.stage + 1
        return doc

    @classmethod
    def from_document(cls, doc: Mapping[str, Any], where: str = 'flow') -> 'FlowSolution':
        """
        Raises:
            ConfigError: On unknown keys or values outside the declared supports
        """
        if not isinstance(doc, Mapping):
            raise ConfigError(f"{where}: expected an object")
        unknown = sorted(set(doc) - {'label', 'n', 'supports', 'entries', 'myerson_stage'})
        if unknown:
            raise ConfigError(f"{where}: unknown keys {unknown}")
        try:
            supports = tuple(tuple(float(v) for v in s) for s in doc['supports'])
        except (KeyError, TypeError) as e:
            raise ConfigError(f"{where}.supports: {e}") from e

        def index(k: int, value: float, path: str) -> int:
            try:
                return supports[k].index(float(value))
            except (ValueError, IndexError):
                raise ConfigError(f"{path}: value {value!r} is not in the stage-{k + 1} support")

        flow = cls(
            supports=supports,
            n=int(doc.get('n', 1)),
            stage=doc['myerson_stage'] - 1 if 'myerson_stage' in doc else None,
            label=str(doc.get('label', '')),
        )
        for e, entry in enumerate(doc.get('entries') or []):
            path = f"{where}.entries[{e}]"
            k = int(entry.get('stage', 0)) - 1
            if not 0 <= k < len(supports):
                raise ConfigError(f"{path}.stage: out of range")
            history = tuple(index(t, v, path) for t, v in enumerate(entry.get('history', [])))
            kind = entry.get('kind')
            if kind == 'lambda':
                if len(history) != k:
                    raise ConfigError(f"{path}.history: λ at stage {k + 1} needs {k} past values")
                key = (k, history, index(k, entry['from'], path), index(k, entry['to'], path))
                flow.lam[key] = float(entry['value'])
            elif kind == 'kappa':
                if len(history) != k + 1:
                    raise ConfigError(f"{path}.history: κ at stage {k + 1} needs {k + 1} values")
                flow.kappa[(k, history)] = float(entry['value'])
            else:
                raise ConfigError(f"{path}.kind: expected 'lambda' or 'kappa', got {kind!r}")
        return flow


# ----------------------------------------------------------------------
# Stochastic dominance
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class DominanceCheck:
    """Result of the dominance test; ``witness`` is (stage, lower history, higher history)."""

    passed: bool
    witness: Optional[Tuple[int, Tuple[float, ...], Tuple[float, ...]]] = None

    def __bool__(self) -> bool:
        return self.passed


def _histories(process: ValueProcess, k: int):
    return itertools.product(*[range(process.stage_size(t)) for t in range(k)])


def check_dominance(instance: DynamicInstance, tol: float = 1e-12) -> DominanceCheck:
    """
    Check that higher histories have stochastically higher next-stage laws.

    For every stage k ≥ 2 and every pair of positive-probability histories
    h ≤ h' (coordinatewise), the conditional cdf at h' must lie below the one
    at h everywhere.

    Returns:
        DominanceCheck with the first violating pair as witness
    """
    process = instance.process
    for k in range(1, process.m):
        reachable = [h for h in _histories(process, k) if process.history_prob(h) > 0]
        cdfs = {h: np.cumsum(process.conditional(h)) for h in reachable}
        for low, high in itertools.permutations(reachable, 2):
            if all(a <= b for a, b in zip(low, high)) and np.any(cdfs[high] > cdfs[low] + tol):
                witness = (k + 1, process.values_of(low), process.values_of(high))
                logger.debug(f"Dominance fails at stage {k + 1}: {witness[1]} vs {witness[2]}")
                return DominanceCheck(False, witness)
    return DominanceCheck(True)


# ----------------------------------------------------------------------
# Construction
# ----------------------------------------------------------------------
def _myerson_chain(flow: FlowSolution, process: ValueProcess, j: int) -> None:
    for past in _histories(process, j):
        weight = process.history_prob(past)
        if weight <= 0:
            continue
        probs = process.conditional(past)
        positive = [v for v in range(len(probs)) if probs[v] > 0]
        for pos in range(1, len(positive)):
            value = weight * float(probs[positive[pos]:].sum())
            flow.lam[(j, past, positive[pos], positive[pos - 1])] = value
        flow.kappa[(j, past + (positive[0],))] = weight


def _corrections(flow: FlowSolution, process: ValueProcess, k: int) -> Dict[IndexHistory, np.ndarray]:
    """
    c_k(h_{<k}, ·) for every stage-k parent: the mismatch between the laws
    seen by deviating types and by truthful ones, pushed down from stage t.
    """
    corrections: Dict[IndexHistory, np.ndarray] = {}
    size = process.stage_size(k)
    for (t, past, a, b), value in flow.lam.items():
        if t >= k or value == 0:
            continue
        deviating = past + (a,)
        reported = past + (b,)
        for rest in itertools.product(*[range(process.stage_size(s)) for s in range(t + 1, k)]):
            carried = value * process.history_prob_from(deviating, rest)
            if carried == 0:
                continue
            parent = reported + rest
            delta = process.conditional(deviating + rest) - process.conditional(parent)
            corrections.setdefault(parent, np.zeros(size))
            corrections[parent] += carried * delta
    return corrections


def build_flow(instance: DynamicInstance, j: int, label: str = '') -> FlowSolution:
    """
    Canonical flow with the Myerson chain at stage ``j`` (0-based).

    Raises:
        DomainError: If j is out of range or a correction multiplier is negative
    """
    process = instance.process
    if not 0 <= j < process.m:
        raise DomainError(f"Myerson stage must be in 1..{process.m}, got {j + 1}")
    flow = FlowSolution(
        supports=tuple(process.supports),
        n=instance.n,
        stage=j,
        label=label or f"myerson-stage-{j + 1}",
    )

    for k in range(j):
        for history in _histories(process, k + 1):
            weight = process.history_prob(history)
            if weight > 0:
                flow.kappa[(k, history)] = weight

    _myerson_chain(flow, process, j)

    for k in range(j + 1, process.m):
        for history in _histories(process, k + 1):
            parent = flow.kappa_at(k - 1, history[:-1])
            weight = float(process.conditional(history[:-1])[history[-1]]) * parent
            if weight != 0:
                flow.kappa[(k, history)] = weight
        if process.independent:
            continue
        for parent, c in _corrections(flow, process, k).items():
            running = np.cumsum(c[::-1])[::-1]
            for v in range(len(c) - 1, 0, -1):
                value = float(running[v])
                if abs(value) <= NEGATIVE_TOL:
                    continue
                if value < 0:
                    raise DomainError(
                        f"negative correction {value:.3g} at stage {k + 1} after "
                        f"{process.values_of(parent)}; the later stages are not stochastically ordered"
                    )
                flow.lam[(k, parent, v, v - 1)] = value

    logger.debug(f"✓ Flow {flow.label}: {len(flow.lam)} λ and {len(flow.kappa)} κ entries")
    return flow


def flow_expectation_myerson(instance: DynamicInstance) -> FlowSolution:
    """Two-stage single-buyer flow bounding revenue by E[X₁] + Mye[X₂]."""
    _require_two_stage_single_buyer(instance)
    return build_flow(instance, 1, label='expectation-then-myerson')


def flow_myerson_expectation(instance: DynamicInstance) -> FlowSolution:
    """Two-stage single-buyer flow bounding revenue by Mye[X₁] + E[X₂]."""
    _require_two_stage_single_buyer(instance)
    return build_flow(instance, 0, label='myerson-then-expectation')


def _require_two_stage_single_buyer(instance: DynamicInstance) -> None:
    if instance.n != 1 or instance.m != 2 or not instance.independent:
        raise DomainError(
            f"this flow needs one buyer and two independent stages, got n={instance.n}, m={instance.m}, "
            f"{'independent' if instance.independent else 'correlated'}"
        )


def flow_general(instance: DynamicInstance, j: int) -> FlowSolution:
    """
    Flow for n buyers and m independent stages with the Myerson chain at ``j``.

    Its Lagrangian equals Mye[𝐗_j] + Σ_{k≠j} E[(X_k)_{1:n}].

    Raises:
        DomainError: On correlated stages or an irregular stage-j law
    """
    if not instance.independent:
        raise DomainError("flow_general needs independent stages; use flow_correlated_dominance")
    marginal = instance.process.marginal(j) if 0 <= j < instance.m else None
    if marginal is None:
        raise DomainError(f"Myerson stage must be in 1..{instance.m}, got {j + 1}")
    if not marginal.is_regular():
        raise DomainError(
            f"stage {j + 1} law is irregular; ironed flows are not constructed "
            f"(virtual values {np.round(marginal.virtual_values(), 6).tolist()})"
        )
    return build_flow(instance, j, label=f"general-stage-{j + 1}")


def flow_correlated_dominance(instance: DynamicInstance, j: int = 0) -> FlowSolution:
    """
    Single-buyer flow for correlated stages ordered by stochastic dominance.

    Raises:
        DomainError: For several buyers, or when dominance fails (the message
            names the violating pair of histories)
    """
    if instance.n != 1:
        raise DomainError(f"correlated flows are single-buyer, got n={instance.n}")
    check = check_dominance(instance)
    if not check:
        stage, low, high = check.witness
        raise DomainError(
            f"stage {stage} law after {high} does not dominate the law after {low}"
        )
    return build_flow(instance, j, label=f"dominance-stage-{j + 1}")


def flow_to_document(flow: FlowSolution) -> Dict[str, Any]:
    return flow.to_document()


def flow_from_document(doc: Mapping[str, Any], where: str = 'flow') -> FlowSolution:
    return FlowSolution.from_document(doc, where)
