"""
Dense tableau simplex with Bland's rule.

Solves max c·z subject to A·z ≤ b, z ≥ 0 with b ≥ 0, so the all-slack basis
is feasible and no phase 1 is needed. Bland's smallest-index rule makes the
pivot sequence deterministic and cycle-free. Meant for the small LPs of this
package and as a cross-check of the sparse solver.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from src.utils.exceptions import SolverError

PIVOT_TOL = 1e-11


@dataclass(frozen=True)
class SimplexResult:
    z: np.ndarray
    objective: float
    iterations: int


def bland_simplex(
    c: np.ndarray,
    A: np.ndarray,
    b: np.ndarray,
    max_iter: Optional[int] = None,
    tol: float = PIVOT_TOL,
    logger: Optional[logging.Logger] = None,
) -> SimplexResult:
    """
    Maximise c·z over {A·z ≤ b, z ≥ 0}.

    Raises:
        SolverError: If b has a negative entry, the LP is unbounded or the
            iteration limit is reached
    """
    log = logger or logging.getLogger(__name__)
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    rows, cols = A.shape
    if np.any(b < 0):
        raise SolverError("the all-slack start needs b ≥ 0")
    max_iter = max_iter or 50 * (rows + cols)

    # tableau [A | I | b] with the reduced-cost row last
    tableau = np.zeros((rows + 1, cols + rows + 1))
    tableau[:rows, :cols] = A
    tableau[:rows, cols:cols + rows] = np.eye(rows)
    tableau[:rows, -1] = b
    tableau[-1, :cols] = -c
    basis = list(range(cols, cols + rows))

    for iteration in range(max_iter):
        reduced = tableau[-1, :-1]
        candidates = np.flatnonzero(reduced < -tol)
        if len(candidates) == 0:
            z = np.zeros(cols + rows)
            z[basis] = tableau[:rows, -1]
            log.debug(f"✓ Bland simplex optimal after {iteration} pivots")
            return SimplexResult(z[:cols], float(tableau[-1, -1]), iteration)
        entering = int(candidates[0])

        column = tableau[:rows, entering]
        positive = column > tol
        if not np.any(positive):
            raise SolverError(f"LP is unbounded along column {entering}")
        ratios = np.full(rows, np.inf)
        ratios[positive] = tableau[:rows, -1][positive] / column[positive]
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + tol * max(1.0, abs(best)))
        leaving = int(min(ties, key=lambda r: basis[r]))

        tableau[leaving] /= tableau[leaving, entering]
        others = np.arange(rows + 1) != leaving
        tableau[others] -= np.outer(tableau[others, entering], tableau[leaving])
        basis[leaving] = entering

    raise SolverError(f"Bland simplex hit the iteration limit of {max_iter}")
