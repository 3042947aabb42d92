"""
Checking flows against the revenue LP and turning them into upper bounds.

A flow is mapped to one multiplier per LP row. The flow is "useful" when
every payment column's Lagrangian coefficient c_p + A_pᵀy vanishes; the
Lagrangian is then maximised over feasible allocations profile by profile.
Flows always refer to the ex-post IR program.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from src.auctions.myerson import myerson_revenue
from src.distributions.order_statistics import expected_order_stat
from src.duality.flows import FlowSolution, flow_correlated_dominance, flow_general
from src.mechanisms.lp_builder import DEFAULT_NONZERO_CAP, LpProblem, build_lp
from src.mechanisms.process import DynamicInstance, IndexHistory
from src.utils.exceptions import DomainError

logger = logging.getLogger(__name__)

USEFUL_TOL = 1e-9


def _flow_lp(instance: DynamicInstance, lp: Optional[LpProblem], cap: int) -> LpProblem:
    if lp is None or lp.ir_mode != 'ex-post':
        lp = build_lp(instance, cap=cap, ir_mode='ex-post')
    return lp


def row_multipliers(lp: LpProblem, flow: FlowSolution) -> np.ndarray:
    """
    One multiplier per ≥-row: the buyer's λ or κ scaled by the probability of
    the other buyers' past histories.
    """
    index = lp.index
    y = np.zeros(len(lp.row_keys))
    for r, (buyer, k, past_code, v, v_hat) in enumerate(lp.row_keys):
        if k == 0:
            own: IndexHistory = ()
            others = 1.0
        else:
            past = index.profile_histories(k - 1, past_code)
            own = index.decode(k - 1, past[buyer])
            probs = index.history_prob(k - 1)
            others = float(np.prod([probs[h] for b, h in enumerate(past) if b != buyer]))
            if others == 0:
                continue
        if v_hat is None:
            value = flow.kappa_at(k, own + (v,))
        else:
            value = flow.lam_at(k, own, v, v_hat)
        y[r] = others * value
    return y


def check_conservation(
    instance: DynamicInstance,
    flow: FlowSolution,
    lp: Optional[LpProblem] = None,
    cap: int = DEFAULT_NONZERO_CAP,
) -> float:
    """
    Largest |c_p + A_pᵀy| over payment columns.

    Raises:
        DomainError: If the flow does not fit the instance
    """
    flow.check_dimensions(instance)
    lp = _flow_lp(instance, lp, cap)
    y = row_multipliers(lp, flow)
    residual = lp.objective[lp.p_slice] + lp.ge_matrix[:, lp.p_slice].T @ y
    return float(np.abs(residual).max(initial=0.0))


def _allocation_coefficients(lp: LpProblem, flow: FlowSolution) -> np.ndarray:
    y = row_multipliers(lp, flow)
    return lp.objective[lp.x_slice] + lp.ge_matrix[:, lp.x_slice].T @ y


def lagrangian_bound(
    instance: DynamicInstance,
    flow: FlowSolution,
    lp: Optional[LpProblem] = None,
    tol: float = USEFUL_TOL,
    cap: int = DEFAULT_NONZERO_CAP,
) -> float:
    """
    max over feasible allocations of the Lagrangian: Σ_{k, profile} max(0, max_i coefficient).

    Raises:
        DomainError: If the flow leaves a payment coefficient nonzero
    """
    lp = _flow_lp(instance, lp, cap)
    residual = check_conservation(instance, flow, lp)
    if residual > tol:
        raise DomainError(f"flow is not useful: payment residual {residual:.3g} exceeds {tol:g}")
    coefficients = _allocation_coefficients(lp, flow)
    index = lp.index
    total = 0.0
    for k in range(index.m):
        start = index.x_offsets[k]
        block = coefficients[start:start + index.profiles[k] * index.n].reshape(index.profiles[k], index.n)
        total += float(np.maximum(block.max(axis=1), 0.0).sum())
    return total


# ----------------------------------------------------------------------
# Virtual values
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class VirtualValueTable:
    """Φ_k(h) per positive-probability node of a buyer's history tree."""

    supports: Tuple[Tuple[float, ...], ...]
    values: Dict[Tuple[int, IndexHistory], float]
    probs: Dict[Tuple[int, IndexHistory], float]

    def at(self, k: int, history: IndexHistory) -> float:
        return self.values[(k, tuple(history))]

    def at_values(self, value_history: Tuple[float, ...]) -> float:
        """Φ at the node given by support values rather than indices."""
        k = len(value_history) - 1
        history = tuple(self.supports[t].index(float(v)) for t, v in enumerate(value_history))
        return self.at(k, history)

    def stage(self, k: int) -> Dict[IndexHistory, float]:
        return {h: phi for (s, h), phi in self.values.items() if s == k}

    def single_buyer_bound(self) -> float:
        """Σ f(h)·max(0, Φ(h)): the Lagrangian value when there is one buyer."""
        return float(sum(self.probs[key] * max(0.0, phi) for key, phi in self.values.items()))


def induced_virtuals(
    instance: DynamicInstance,
    flow: FlowSolution,
    lp: Optional[LpProblem] = None,
    tol: float = USEFUL_TOL,
) -> VirtualValueTable:
    """
    Φ_k(h) = v_k − (1/f(h))·Σ_{v̂} (v̂ − v_k)·λ_k(h_{<k}, v̂ → v_k).

    Zero-probability nodes are left out.

    Raises:
        DomainError: If the flow is not useful
    """
    residual = check_conservation(instance, flow, lp)
    if residual > tol:
        raise DomainError(f"flow is not useful: payment residual {residual:.3g} exceeds {tol:g}")
    process = instance.process
    inflow: Dict[Tuple[int, IndexHistory], float] = {}
    for (k, past, a, b), value in flow.lam.items():
        key = (k, past + (b,))
        inflow[key] = inflow.get(key, 0.0) + (process.supports[k][a] - process.supports[k][b]) * value

    values, probs = {}, {}
    for k in range(process.m):
        for history in np.ndindex(*[process.stage_size(t) for t in range(k + 1)]):
            history = tuple(int(i) for i in history)
            f = process.history_prob(history)
            if f <= 0:
                continue
            v = process.supports[k][history[-1]]
            values[(k, history)] = v - inflow.get((k, history), 0.0) / f
            probs[(k, history)] = f
    return VirtualValueTable(tuple(process.supports), values, probs)


# ----------------------------------------------------------------------
# Closed-form bounds and flow selection
# ----------------------------------------------------------------------
def stage_bound(instance: DynamicInstance, j: int) -> float:
    """Mye[𝐗_j] + Σ_{k≠j} E[(X_k)_{1:n}] on the stage marginals."""
    marginals = instance.marginals()
    if not 0 <= j < len(marginals):
        raise DomainError(f"stage must be in 1..{len(marginals)}, got {j + 1}")
    total = myerson_revenue(marginals[j], instance.n)
    total += sum(expected_order_stat(d, 1, instance.n) for k, d in enumerate(marginals) if k != j)
    return float(total)


def min_stage_bound(instance: DynamicInstance) -> Tuple[int, float]:
    """(j, bound) minimising ``stage_bound`` over the stages; ties go to the lowest j."""
    bounds = [stage_bound(instance, j) for j in range(instance.m)]
    j = int(np.argmin(bounds))
    return j, bounds[j]


def conditional_stage_bound(instance: DynamicInstance, j: int) -> float:
    """
    E[Mye[X_j | X_{<j}]] + Σ_{k≠j} E[X_k] for a single buyer with correlated stages.

    The dominance flow's Lagrangian never exceeds this value.
    """
    if instance.n != 1:
        raise DomainError(f"the conditional bound is single-buyer, got n={instance.n}")
    process = instance.process
    total = sum(d.mean() for k, d in enumerate(instance.marginals()) if k != j)
    for past in np.ndindex(*[process.stage_size(t) for t in range(j)]):
        past = tuple(int(i) for i in past)
        weight = process.history_prob(past)
        if weight > 0:
            total += weight * myerson_revenue(process.conditional_dist(past).without_zero_mass(), 1)
    return float(total)


def flow_for_stage(instance: DynamicInstance, j: int) -> FlowSolution:
    """Independent stages get ``flow_general``; correlated single-buyer ones the dominance flow."""
    if instance.independent:
        return flow_general(instance, j)
    return flow_correlated_dominance(instance, j)


@dataclass(frozen=True)
class DualityReport:
    """One row of a duality run."""

    stage: int
    label: str
    residual: float
    min_multiplier: float
    bound: float
    closed_form: float

    def as_dict(self) -> dict:
        return {
            'myerson_stage': self.stage + 1,
            'flow': self.label,
            'residual': self.residual,
            'min_multiplier': self.min_multiplier,
            'lagrangian_bound': self.bound,
            'closed_form': self.closed_form,
        }


def duality_reports(
    instance: DynamicInstance,
    cap: int = DEFAULT_NONZERO_CAP,
    log: Optional[logging.Logger] = None,
) -> List[DualityReport]:
    """Build, check and evaluate the canonical flow for every Myerson stage."""
    log = log or logger
    lp = build_lp(instance, cap=cap, ir_mode='ex-post')
    reports = []
    for j in range(instance.m):
        flow = flow_for_stage(instance, j)
        residual = check_conservation(instance, flow, lp)
        bound = lagrangian_bound(instance, flow, lp)
        closed = stage_bound(instance, j) if instance.independent else conditional_stage_bound(instance, j)
        reports.append(DualityReport(j, flow.label, residual, flow.min_multiplier(), bound, closed))
        log.info(f"  ✓ Myerson stage {j + 1}: bound {bound:.12g} (closed form {closed:.12g}, residual {residual:.2g})")
    return reports


def best_flow(instance: DynamicInstance, cap: int = DEFAULT_NONZERO_CAP) -> Tuple[int, FlowSolution, float]:
    """(j, flow, bound) with the smallest Lagrangian bound over Myerson stages."""
    lp = build_lp(instance, cap=cap, ir_mode='ex-post')
    best: Optional[Tuple[int, FlowSolution, float]] = None
    for j in range(instance.m):
        flow = flow_for_stage(instance, j)
        bound = lagrangian_bound(instance, flow, lp)
        if best is None or bound < best[2] - 1e-12:
            best = (j, flow, bound)
    return best

