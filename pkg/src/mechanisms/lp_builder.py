"""
Revenue-maximisation LP for n buyers and m stages under periodic IC.

Variables are x^i_k(profile) ∈ [0, 1] and free p^i_k(profile) for every buyer,
stage and full report-profile history. The objective is the expected payment
Σ f(profile)·p. Constraint rows, all written as A·z ≥ 0:

- PIC, one per (buyer, stage, past profile, true value v, report v̂ ≠ v):
  expected utility from reporting v now and truthfully afterwards, minus the
  same with v̂ reported now. The expectation runs over the other buyers'
  current values and everyone's future values, all drawn given the true
  histories.
- IR, one per (buyer, stage, past profile, v): current-stage expected utility
  (ex-post mode) or the expected continuation utility (ex-ante mode).

Feasibility rows Σᵢ x^i_k(profile) ≤ 1 go in a separate ≤ block (dropped for a
single buyer, where the box bound already covers them).
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy import sparse

from src.mechanisms.history import HistoryIndex
from src.mechanisms.process import IR_MODES, DynamicInstance
from src.utils.exceptions import DomainError, SizeLimitError

DEFAULT_NONZERO_CAP = 500_000

RowKey = Tuple[int, int, int, int, Optional[int]]


@dataclass
class LpProblem:
    """
    A built LP: maximise objective·z subject to ge_matrix·z ≥ 0,
    le_matrix·z ≤ le_rhs and the column bounds.

    ``row_keys[r]`` is (buyer, stage, past profile code, v index, v̂ index) for
    PIC rows and the same with v̂ = None for IR rows.
    """

    index: HistoryIndex
    ir_mode: str
    objective: np.ndarray
    ge_matrix: sparse.csr_matrix
    le_matrix: sparse.csr_matrix
    le_rhs: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    row_kinds: List[str] = field(default_factory=list)
    row_keys: List[RowKey] = field(default_factory=list)

    @property
    def column_count(self) -> int:
        return self.objective.shape[0]

    @property
    def row_count(self) -> int:
        return self.ge_matrix.shape[0] + self.le_matrix.shape[0]

    @property
    def nonzeros(self) -> int:
        return int(self.ge_matrix.nnz + self.le_matrix.nnz)

    @property
    def x_slice(self) -> slice:
        return slice(0, self.index.x_count)

    @property
    def p_slice(self) -> slice:
        return slice(self.index.x_count, self.column_count)

    def rows_of(self, kind: str) -> np.ndarray:
        return np.asarray([r for r, k in enumerate(self.row_kinds) if k == kind], dtype=int)

    def row_lookup(self) -> Dict[RowKey, int]:
        return {key: r for r, key in enumerate(self.row_keys)}

    def summary(self) -> str:
        return (
            f"{self.column_count} columns, {self.ge_matrix.shape[0]} PIC/IR rows, "
            f"{self.le_matrix.shape[0]} feasibility rows, {self.nonzeros} nonzeros ({self.ir_mode} IR)"
        )


class _RowBuffer:
    """Collects COO triplets and enforces the nonzero cap."""

    def __init__(self, cap: int, columns: int):
        self.cap = cap
        self.columns = columns
        self.rows: List[np.ndarray] = []
        self.cols: List[np.ndarray] = []
        self.vals: List[np.ndarray] = []
        self.count = 0
        self.nnz = 0

    def add(self, cols: np.ndarray, vals: np.ndarray) -> int:
        keep = vals != 0
        cols, vals = cols[keep], vals[keep]
        self.rows.append(np.full(len(cols), self.count, dtype=np.int64))
        self.cols.append(cols.astype(np.int64))
        self.vals.append(vals)
        self.nnz += len(cols)
        if self.nnz > self.cap:
            raise SizeLimitError(
                f"LP exceeds the nonzero cap of {self.cap}: more than {self.nnz} nonzeros "
                f"after {self.count + 1} rows over {self.columns} columns"
            )
        self.count += 1
        return self.count - 1

    def matrix(self) -> sparse.csr_matrix:
        if not self.rows:
            return sparse.csr_matrix((0, self.columns))
        return sparse.coo_matrix(
            (np.concatenate(self.vals), (np.concatenate(self.rows), np.concatenate(self.cols))),
            shape=(self.count, self.columns),
        ).tocsr()


def _truthful_terms(index: HistoryIndex, buyer: int, k: int, past: Tuple[int, ...], v: int):
    """
    Entries of the truthful side of a stage-k row for ``buyer`` with true value
    index ``v`` after past profile ``past``.

    Returns:
        (x columns, weights W, buyer's true values u, x-column shift per unit
        change of the stage-k report, stage of each entry)
    """
    n = index.n
    xs, ws, us, shifts, stages = [], [], [], [], []
    own_k = (past[buyer] * index.sizes[k] + v) if k > 0 else v
    for j in range(k, index.m):
        codes, weights = [], []
        for b in range(n):
            if b == buyer:
                lo, hi = index.descendants(k, own_k, j)
                c = np.arange(lo, hi)
                w = index.chain(k + 1, j)[c]
            else:
                if k == 0:
                    c = np.arange(index.per_buyer[j])
                else:
                    lo, hi = index.descendants(k - 1, past[b], j)
                    c = np.arange(lo, hi)
                w = index.chain(k, j)[c]
            codes.append(c)
            weights.append(w)

        grids = np.meshgrid(*codes, indexing='ij')
        weight_grid = np.ones(grids[0].shape)
        for b in range(n):
            shape = [1] * n
            shape[b] = len(weights[b])
            weight_grid = weight_grid * weights[b].reshape(shape)
        profile = index.profile_code(j, grids).ravel()
        weight = weight_grid.ravel()
        own_codes = grids[buyer].ravel()

        keep = weight > 0
        profile, weight, own_codes = profile[keep], weight[keep], own_codes[keep]
        xs.append(index.x_column(j, profile, buyer))
        ws.append(weight)
        us.append(index.last_value(j, own_codes))
        unit = index.block_size(k, j) * index.per_buyer[j] ** (n - 1 - buyer) * n
        shifts.append(np.full(len(profile), unit, dtype=np.int64))
        stages.append(np.full(len(profile), j, dtype=np.int64))

    return (
        np.concatenate(xs).astype(np.int64),
        np.concatenate(ws),
        np.concatenate(us),
        np.concatenate(shifts),
        np.concatenate(stages),
    )


def build_lp(
    instance: DynamicInstance,
    cap: int = DEFAULT_NONZERO_CAP,
    ir_mode: Optional[str] = None,
    logger: Optional[logging.Logger] = None,
) -> LpProblem:
    """
    Build the PIC revenue LP of ``instance``.

    Args:
        instance: The dynamic instance
        cap: Maximum number of constraint nonzeros
        ir_mode: Override of the instance's IR mode ('ex-post' or 'ex-ante')
        logger: Optional logger

    Returns:
        LpProblem

    Raises:
        SizeLimitError: If the column count or nonzero count exceeds ``cap``
    """
    log = logger or logging.getLogger(__name__)
    mode = ir_mode or instance.ir_mode
    if mode not in IR_MODES:
        raise DomainError(f"ir_mode must be one of {IR_MODES}, got {mode!r}")

    index = HistoryIndex(instance)
    n, m = index.n, index.m
    columns = index.column_count
    if columns > cap:
        raise SizeLimitError(
            f"LP has {columns} columns ({instance.history_count()} profile histories), "
            f"over the cap of {cap}"
        )

    log.debug(f"📊 Building LP: n={n}, m={m}, supports={index.sizes}, {columns} columns, {mode} IR")
    ge = _RowBuffer(cap, columns)
    kinds: List[str] = []
    keys: List[RowKey] = []
    x_count = index.x_count

    for k in range(m):
        past_count = index.profiles[k - 1] if k > 0 else 1
        size = index.sizes[k]
        for buyer in range(n):
            for past_code in range(past_count):
                past = index.profile_histories(k - 1, past_code) if k > 0 else (0,) * n
                for v in range(size):
                    x_cols, weight, values, unit, stages = _truthful_terms(index, buyer, k, past, v)
                    p_cols = x_cols + x_count
                    current = stages == k

                    for v_hat in range(size):
                        if v_hat == v:
                            continue
                        delta = (v_hat - v) * unit
                        cols = np.concatenate((x_cols, p_cols, x_cols + delta, p_cols + delta))
                        vals = np.concatenate((values * weight, -weight, -values * weight, weight))
                        ge.add(cols, vals)
                        kinds.append('pic')
                        keys.append((buyer, k, past_code, v, v_hat))

                    if mode == 'ex-post':
                        cols = np.concatenate((x_cols[current], p_cols[current]))
                        vals = np.concatenate((values[current] * weight[current], -weight[current]))
                    else:
                        cols = np.concatenate((x_cols, p_cols))
                        vals = np.concatenate((values * weight, -weight))
                    ge.add(cols, vals)
                    kinds.append('ir')
                    keys.append((buyer, k, past_code, v, None))

    le_rows, le_cols = [], []
    row = 0
    if n > 1:
        for k in range(m):
            profiles = np.arange(index.profiles[k])
            for buyer in range(n):
                le_rows.append(row + profiles)
                le_cols.append(index.x_column(k, profiles, buyer))
            row += index.profiles[k]
    if le_rows:
        le_matrix = sparse.coo_matrix(
            (np.ones(sum(len(r) for r in le_rows)), (np.concatenate(le_rows), np.concatenate(le_cols))),
            shape=(row, columns),
        ).tocsr()
    else:
        le_matrix = sparse.csr_matrix((0, columns))
    if ge.nnz + le_matrix.nnz > cap:
        raise SizeLimitError(f"LP exceeds the nonzero cap of {cap}: {ge.nnz + le_matrix.nnz} nonzeros")

    objective = np.zeros(columns)
    for k in range(m):
        start = x_count + index.x_offsets[k]
        objective[start:start + index.profiles[k] * n] = np.repeat(index.profile_prob(k), n)

    lower = np.concatenate((np.zeros(x_count), np.full(x_count, -np.inf)))
    upper = np.concatenate((np.ones(x_count), np.full(x_count, np.inf)))

    lp = LpProblem(
        index=index,
        ir_mode=mode,
        objective=objective,
        ge_matrix=ge.matrix(),
        le_matrix=le_matrix,
        le_rhs=np.ones(le_matrix.shape[0]),
        lower=lower,
        upper=upper,
        row_kinds=kinds,
        row_keys=keys,
    )
    log.debug(f"✓ LP built: {lp.summary()}")
    return lp
