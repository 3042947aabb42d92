"""
Constraint checks for a mechanism and the welfare upper bound.

``verify_mechanism`` recomputes every PIC and IR row by walking the history
tree: for a buyer's own history and the others' past it enumerates the
continuations, their conditional probabilities and the table entries they
hit. The LP matrix is only used as a cross-check of those row values.

Interim rows average over cells, so a shortfall is reported per unit of the
least likely cell of its row. A payment raised by δ on one cell of a tight
row then reads as a violation of at least δ.
"""

import itertools
import logging
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from src.distributions.order_statistics import expected_order_stat
from src.mechanisms.history import HistoryIndex
from src.mechanisms.lp_builder import LpProblem, RowKey, build_lp
from src.mechanisms.process import DynamicInstance, IndexHistory
from src.mechanisms.solver import MechanismSolution
from src.utils.exceptions import DomainError


@dataclass(frozen=True)
class VerificationReport:
    """
    Largest violation per constraint family, and the mechanism's revenue.

    ``pic`` and ``ir`` are shortfalls per unit of the least likely cell of the
    row; ``expected_shortfall`` is the largest plain interim shortfall.
    ``matrix_mismatch`` is the largest gap between a recomputed row and the
    same row evaluated through the LP matrix.
    """

    pic: float
    ir: float
    feasibility: float
    box: float
    matrix_mismatch: float
    expected_shortfall: float
    revenue: float
    ir_mode: str
    worst_kind: str
    worst_row: Optional[RowKey]

    @property
    def max_violation(self) -> float:
        return max(self.pic, self.ir, self.feasibility, self.box, self.matrix_mismatch)

    def passed(self, tol: float = 1e-6) -> bool:
        return self.max_violation <= tol

    def as_dict(self) -> dict:
        return {
            'pic': self.pic,
            'ir': self.ir,
            'feasibility': self.feasibility,
            'box': self.box,
            'matrix_mismatch': self.matrix_mismatch,
            'expected_shortfall': self.expected_shortfall,
            'max_violation': self.max_violation,
            'revenue': self.revenue,
            'ir_mode': self.ir_mode,
        }


@dataclass
class _RowCells:
    """Cells reached from one (buyer, stage, past, true value) node."""

    stages: np.ndarray
    weights: np.ndarray
    values: np.ndarray
    columns: np.ndarray
    codes: List[Tuple[int, ...]]
    owns: List[IndexHistory]


def _continuations(index: HistoryIndex, start: IndexHistory, stop: int) -> Iterator[Tuple[IndexHistory, float]]:
    """Every stage-``stop`` extension of ``start`` with f(extension | start) > 0."""
    tails = itertools.product(*(range(index.sizes[t]) for t in range(len(start), stop + 1)))
    for tail in tails:
        prob = index.process.history_prob_from(start, tail)
        if prob > 0:
            yield tuple(start) + tail, prob


def _column(index: HistoryIndex, stage: int, codes: Tuple[int, ...], buyer: int) -> int:
    return int(index.x_column(stage, int(index.profile_code(stage, codes)), buyer))


def _row_cells(index: HistoryIndex, buyer: int, k: int, pasts: List[IndexHistory], v: int) -> _RowCells:
    own_start = tuple(pasts[buyer]) + (v,)
    stages, weights, values, columns, codes, owns = [], [], [], [], [], []
    for j in range(k, index.m):
        branches = []
        for b in range(index.n):
            start = own_start if b == buyer else pasts[b]
            branches.append([(h, index.encode(h), p) for h, p in _continuations(index, start, j)])
        for combo in itertools.product(*branches):
            cell_codes = tuple(code for _, code, _ in combo)
            own = combo[buyer][0]
            stages.append(j)
            weights.append(float(np.prod([p for _, _, p in combo])))
            values.append(float(index.values[j][own[j]]))
            columns.append(_column(index, j, cell_codes, buyer))
            codes.append(cell_codes)
            owns.append(own)
    return _RowCells(
        stages=np.asarray(stages, dtype=int),
        weights=np.asarray(weights),
        values=np.asarray(values),
        columns=np.asarray(columns, dtype=int),
        codes=codes,
        owns=owns,
    )


def _misreport_columns(index: HistoryIndex, cells: _RowCells, buyer: int, k: int, v_hat: int) -> np.ndarray:
    """Columns hit when the stage-k report is ``v_hat`` and every other report is truthful."""
    columns = []
    for stage, codes, own in zip(cells.stages, cells.codes, cells.owns):
        reported = own[:k] + (v_hat,) + own[k + 1:]
        shifted = codes[:buyer] + (index.encode(reported),) + codes[buyer + 1:]
        columns.append(_column(index, int(stage), shifted, buyer))
    return np.asarray(columns, dtype=int)


def _per_cell(shortfall: float, weights: np.ndarray) -> float:
    if shortfall <= 0 or not len(weights):
        return 0.0
    return shortfall / float(weights.min())


def row_values(
    index: HistoryIndex,
    solution: MechanismSolution,
    ir_mode: str,
) -> Dict[RowKey, Tuple[str, float, float]]:
    """
    Recompute every PIC and IR row of ``solution`` from the history tree.

    Returns:
        {row key: (kind, row value, shortfall per unit of the least likely cell)}
        where a PIC value is truthful minus misreport utility and an IR value
        is the buyer's expected utility; both must be ≥ 0
    """
    x, p = solution.allocation, solution.payment
    rows: Dict[RowKey, Tuple[str, float, float]] = {}
    for k in range(index.m):
        past_count = index.profiles[k - 1] if k > 0 else 1
        for buyer in range(index.n):
            for past_code in range(past_count):
                if k > 0:
                    pasts = [index.decode(k - 1, h) for h in index.profile_histories(k - 1, past_code)]
                else:
                    pasts = [()] * index.n
                for v in range(index.sizes[k]):
                    cells = _row_cells(index, buyer, k, pasts, v)
                    w, u, cols = cells.weights, cells.values, cells.columns
                    truthful = float(np.dot(w, u * x[cols] - p[cols]))

                    for v_hat in range(index.sizes[k]):
                        if v_hat == v:
                            continue
                        lie = _misreport_columns(index, cells, buyer, k, v_hat)
                        value = truthful - float(np.dot(w, u * x[lie] - p[lie]))
                        rows[(buyer, k, past_code, v, v_hat)] = ('pic', value, _per_cell(-value, w))

                    scope = cells.stages == k if ir_mode == 'ex-post' else np.ones(len(w), dtype=bool)
                    value = float(np.dot(w[scope], u[scope] * x[cols[scope]] - p[cols[scope]]))
                    rows[(buyer, k, past_code, v, None)] = ('ir', value, _per_cell(-value, w[scope]))
    return rows


def _matrix_mismatch(lp: LpProblem, solution: MechanismSolution, rows: Dict[RowKey, Tuple[str, float, float]]) -> float:
    if set(lp.row_keys) != set(rows):
        return float('inf')
    matrix = lp.ge_matrix @ solution.vector
    direct = np.asarray([rows[key][1] for key in lp.row_keys])
    return float(np.abs(matrix - direct).max(initial=0.0))


def verify_mechanism(
    instance: DynamicInstance,
    solution: MechanismSolution,
    lp: Optional[LpProblem] = None,
    ir_mode: Optional[str] = None,
    logger: Optional[logging.Logger] = None,
) -> VerificationReport:
    """
    Evaluate every PIC, IR, feasibility and box constraint at ``solution``.

    Args:
        instance: The instance the mechanism is meant for
        solution: Allocation and payment tables
        lp: Prebuilt LP for the instance, used for the matrix cross-check
            (built here when omitted)
        ir_mode: IR mode to check against; defaults to the instance's
        logger: Optional logger

    Raises:
        DomainError: If the tables do not match the instance's history layout
    """
    log = logger or logging.getLogger(__name__)
    mode = ir_mode or instance.ir_mode
    if lp is None or lp.ir_mode != mode:
        lp = build_lp(instance, ir_mode=mode)
    index = lp.index
    if solution.index.x_count != index.x_count or solution.index.sizes != index.sizes:
        raise DomainError(
            f"mechanism has {solution.index.x_count} entries per table, "
            f"the instance needs {index.x_count}"
        )

    rows = row_values(index, solution, mode)
    pic = max((r[2] for r in rows.values() if r[0] == 'pic'), default=0.0)
    ir = max((r[2] for r in rows.values() if r[0] == 'ir'), default=0.0)
    expected_shortfall = max((max(-r[1], 0.0) for r in rows.values()), default=0.0)

    x = solution.allocation
    feasibility = 0.0
    for k in range(index.m):
        start = index.x_offsets[k]
        block = x[start:start + index.profiles[k] * index.n].reshape(index.profiles[k], index.n)
        feasibility = max(feasibility, float(np.maximum(block.sum(axis=1) - 1.0, 0.0).max(initial=0.0)))
    box = float(max(np.maximum(-x, 0.0).max(initial=0.0), np.maximum(x - 1.0, 0.0).max(initial=0.0)))

    mismatch = _matrix_mismatch(lp, solution, rows)
    if mismatch > 1e-9:
        log.warning(f"⚠️ LP matrix rows differ from the recomputed rows by {mismatch:.3g}")

    worst_row = None
    worst_kind = 'none'
    if rows:
        key, (kind, _, shortfall) = max(rows.items(), key=lambda item: item[1][2])
        if shortfall > 0:
            worst_row, worst_kind = key, kind

    report = VerificationReport(
        pic=pic,
        ir=ir,
        feasibility=feasibility,
        box=box,
        matrix_mismatch=mismatch,
        expected_shortfall=expected_shortfall,
        revenue=solution.expected_revenue(),
        ir_mode=mode,
        worst_kind=worst_kind,
        worst_row=worst_row,
    )
    log.debug(
        f"Verification ({mode}): PIC {pic:.3g}, IR {ir:.3g}, feasibility {feasibility:.3g}, "
        f"box {box:.3g}, matrix gap {mismatch:.3g}, revenue {report.revenue:.12g}"
    )
    return report


def welfare_bound(instance: DynamicInstance) -> float:
    """
    Σ_k E[(X_k)_{1:n}]: no mechanism can collect more than the expected welfare.

    Example:
        >>> from src.distributions.discrete import DiscreteDist
        >>> from src.mechanisms.process import ValueProcess
        >>> stage = DiscreteDist.uniform([1.0, 2.0])
        >>> welfare_bound(DynamicInstance(2, ValueProcess.independent_stages([stage, stage])))
        3.5
    """
    return float(sum(expected_order_stat(d, 1, instance.n) for d in instance.marginals()))
