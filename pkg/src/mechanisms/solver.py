"""
Solving the revenue LP and holding the resulting mechanism.

The default backend is scipy's HiGHS dual simplex. The dense Bland simplex
from ``simplex.py`` is selectable for small LPs and cross-checks.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np
import pandas as pd
from scipy import optimize, sparse

from src.mechanisms.history import HistoryIndex
from src.mechanisms.lp_builder import LpProblem
from src.mechanisms.simplex import bland_simplex
from src.utils.exceptions import DomainError, SolverError

SOLVER_METHODS = ('highs', 'bland')
DEFAULT_TOLERANCE = 1e-7
BLAND_COLUMN_LIMIT = 4000


@dataclass
class MechanismSolution:
    """
    Allocation and payment tables indexed like the LP columns.

    ``allocation[x_column]`` and ``payment[x_column]`` hold x^i_k and p^i_k for
    the profile/buyer/stage encoded by ``index.x_column``.
    """

    index: HistoryIndex
    allocation: np.ndarray
    payment: np.ndarray
    objective: float
    label: str = 'PIC-OPT'
    method: str = ''
    info: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.allocation.shape != (self.index.x_count,) or self.payment.shape != (self.index.x_count,):
            raise DomainError(
                f"mechanism tables must have {self.index.x_count} entries, got "
                f"{self.allocation.shape} and {self.payment.shape}"
            )

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate((self.allocation, self.payment))

    def x(self, k: int, profile: int, buyer: int) -> float:
        return float(self.allocation[self.index.x_column(k, profile, buyer)])

    def p(self, k: int, profile: int, buyer: int) -> float:
        return float(self.payment[self.index.x_column(k, profile, buyer)])

    def expected_revenue(self) -> float:
        """Σ f(profile)·p over all stages, profiles and buyers."""
        total = 0.0
        for k in range(self.index.m):
            start = self.index.x_offsets[k]
            stop = start + self.index.profiles[k] * self.index.n
            weights = np.repeat(self.index.profile_prob(k), self.index.n)
            total += float(np.dot(weights, self.payment[start:stop]))
        return total

    def with_payment_shift(self, column: int, amount: float) -> 'MechanismSolution':
        """Copy with ``amount`` added to one payment entry (perturbation checks)."""
        payment = self.payment.copy()
        payment[column] += amount
        return MechanismSolution(self.index, self.allocation.copy(), payment, self.objective, self.label, self.method)

    def to_frame(self) -> pd.DataFrame:
        """One row per (stage, buyer, profile history) with x, p and probability."""
        records = []
        for k in range(self.index.m):
            probs = self.index.profile_prob(k)
            for profile in range(self.index.profiles[k]):
                histories = self.index.profile_histories(k, profile)
                values = [self.index.process.values_of(self.index.decode(k, h)) for h in histories]
                for buyer in range(self.index.n):
                    column = self.index.x_column(k, profile, buyer)
                    records.append({
                        'stage': k + 1,
                        'buyer': buyer + 1,
                        'history': ' | '.join(','.join(f"{v:.12g}" for v in h) for h in values),
                        'probability': float(probs[profile]),
                        'x': float(self.allocation[column]),
                        'p': float(self.payment[column]),
                    })
        return pd.DataFrame.from_records(records)


def _solve_highs(lp: LpProblem, tolerance: float):
    A_ub = sparse.vstack([-lp.ge_matrix, lp.le_matrix]).tocsr()
    b_ub = np.concatenate((np.zeros(lp.ge_matrix.shape[0]), lp.le_rhs))
    bounds = [
        (None if np.isinf(lo) else lo, None if np.isinf(hi) else hi)
        for lo, hi in zip(lp.lower, lp.upper)
    ]
    result = optimize.linprog(
        -lp.objective,
        A_ub=A_ub,
        b_ub=b_ub,
        bounds=bounds,
        method='highs-ds',
        options={
            'primal_feasibility_tolerance': min(1e-9, tolerance),
            'dual_feasibility_tolerance': min(1e-9, tolerance),
        },
    )
    if result.status == 3:
        raise SolverError("LP reported unbounded; the revenue LP is bounded by welfare, so a row is wrong")
    if result.status == 2:
        raise SolverError("LP reported infeasible; the zero mechanism is always feasible, so a row is wrong")
    if result.status != 0:
        raise SolverError(f"HiGHS failed with status {result.status}: {result.message}")
    return np.asarray(result.x, dtype=float), float(-result.fun)


def _solve_bland(lp: LpProblem, tolerance: float):
    """Split the free payments as p = p⁺ − p⁻ and add x ≤ 1 rows."""
    x_count = lp.index.x_count
    if 3 * x_count > BLAND_COLUMN_LIMIT:
        raise SolverError(
            f"dense Bland simplex is limited to {BLAND_COLUMN_LIMIT} columns; this LP needs {3 * x_count}"
        )
    ge = lp.ge_matrix.toarray()
    le = lp.le_matrix.toarray()
    A_full = np.vstack([-ge, le, np.hstack((np.eye(x_count), np.zeros((x_count, x_count))))])
    A_split = np.hstack((A_full, -A_full[:, x_count:]))
    b = np.concatenate((np.zeros(ge.shape[0]), lp.le_rhs, np.ones(x_count)))
    c = np.concatenate((lp.objective, -lp.objective[x_count:]))
    result = bland_simplex(c, A_split, b)
    z = result.z[:2 * x_count].copy()
    z[x_count:] -= result.z[2 * x_count:]
    return z, result.objective


def solve_lp(
    lp: LpProblem,
    tolerance: float = DEFAULT_TOLERANCE,
    method: str = 'highs',
    logger: Optional[logging.Logger] = None,
) -> MechanismSolution:
    """
    Solve ``lp`` and return the optimal mechanism.

    Args:
        lp: Built LP
        tolerance: Feasibility tolerance handed to the backend (capped at 1e-9)
        method: 'highs' (default) or 'bland'
        logger: Optional logger

    Raises:
        SolverError: On unbounded, infeasible or failed solves
    """
    log = logger or logging.getLogger(__name__)
    if method not in SOLVER_METHODS:
        raise DomainError(f"unknown solver method {method!r}; expected one of {SOLVER_METHODS}")

    log.debug(f"📊 Solving LP with {method}: {lp.summary()}")
    if method == 'highs':
        z, objective = _solve_highs(lp, tolerance)
    else:
        z, objective = _solve_bland(lp, tolerance)

    x_count = lp.index.x_count
    solution = MechanismSolution(
        index=lp.index,
        allocation=z[:x_count],
        payment=z[x_count:],
        objective=objective,
        label='PIC-OPT',
        method=method,
        info={'columns': lp.column_count, 'rows': lp.row_count, 'nonzeros': lp.nonzeros},
    )
    log.debug(f"✓ LP optimum {objective:.12g} ({method})")
    return solution
