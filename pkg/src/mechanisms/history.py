"""
Indexing of report histories and profile histories.

A buyer's stage-k history (0-based k) is a tuple of support indices for
stages 0..k, encoded mixed-radix as an integer in [0, H_k) with
H_k = Π_{t≤k} |supp_t|. The child of history h with stage-(k+1) index v is
h·|supp_{k+1}| + v, so all stage-j descendants of a stage-k history form a
contiguous block.

A profile history is one history per buyer, encoded as Σ_b h_b·H_k^{n−1−b}
(buyer 0 most significant). Columns of the LP are laid out stage by stage,
then profile, then buyer.
"""

import logging
from functools import lru_cache
from typing import List, Optional, Tuple

import numpy as np

from src.mechanisms.process import DynamicInstance, IndexHistory
from src.utils.exceptions import DomainError


class HistoryIndex:
    """
    Column positions, probabilities and conditional weights for one instance.

    Attributes:
        n: Number of buyers
        m: Number of stages
        sizes: Support size per stage
        per_buyer: H_k, number of single-buyer histories at stage k
        profiles: H_k^n, number of profile histories at stage k
        x_offsets: First x column of each stage; p columns follow all x columns
    """

    def __init__(self, instance: DynamicInstance, logger: Optional[logging.Logger] = None):
        self.instance = instance
        self.process = instance.process
        self.n = instance.n
        self.m = instance.m
        self.logger = logger or logging.getLogger(__name__)
        self.sizes = [self.process.stage_size(k) for k in range(self.m)]
        self.values = [np.asarray(self.process.supports[k], dtype=float) for k in range(self.m)]

        self.per_buyer: List[int] = []
        running = 1
        for size in self.sizes:
            running *= size
            self.per_buyer.append(running)
        self.profiles = [h ** self.n for h in self.per_buyer]

        self.x_offsets: List[int] = []
        offset = 0
        for k in range(self.m):
            self.x_offsets.append(offset)
            offset += self.profiles[k] * self.n
        self.x_count = offset

        self._cond = [self._stage_conditionals(k) for k in range(self.m)]
        self._probs = self._history_probs()

    # ------------------------------------------------------------------
    # Single-buyer histories
    # ------------------------------------------------------------------
    def _stage_conditionals(self, k: int) -> np.ndarray:
        """cond[h] = f(v_k | parent of h) for every stage-k history h."""
        if k == 0:
            return np.asarray(self.process.conditional(()), dtype=float)
        parents = self.per_buyer[k - 1]
        rows = [self.process.conditional(self.decode(k - 1, h)) for h in range(parents)]
        return np.concatenate(rows)

    def _history_probs(self) -> List[np.ndarray]:
        probs = [self._cond[0].copy()]
        for k in range(1, self.m):
            parent = np.repeat(probs[-1], self.sizes[k])
            probs.append(parent * self._cond[k])
        return probs

    def decode(self, k: int, h: int) -> IndexHistory:
        """Index tuple of the stage-k history ``h``."""
        digits = []
        for t in range(k, -1, -1):
            h, v = divmod(h, self.sizes[t])
            digits.append(v)
        if h != 0:
            raise DomainError(f"history code out of range at stage {k}")
        return tuple(reversed(digits))

    def encode(self, history: IndexHistory) -> int:
        code = 0
        for t, v in enumerate(history):
            code = code * self.sizes[t] + v
        return code

    def last_value(self, k: int, h) -> np.ndarray:
        """Support value of the stage-k entry of stage-k history code(s) ``h``."""
        return self.values[k][np.asarray(h) % self.sizes[k]]

    def parent(self, k: int, h):
        return np.asarray(h) // self.sizes[k]

    def history_prob(self, k: int) -> np.ndarray:
        """f(h) for all stage-k single-buyer histories."""
        return self._probs[k]

    def conditional_weights(self, k: int) -> np.ndarray:
        """f(v_k | parent) for all stage-k histories."""
        return self._cond[k]

    @lru_cache(maxsize=None)
    def chain(self, start: int, end: int) -> np.ndarray:
        """
        Π_{t=start..end} f(v_t | v_{<t}) for every stage-``end`` history.

        Returns ones when start > end.
        """
        if start > end:
            return np.ones(self.per_buyer[end])
        weights = self._cond[end].copy()
        stride = 1
        for t in range(end - 1, start - 1, -1):
            stride *= self.sizes[t + 1]
            weights *= self._cond[t][np.arange(self.per_buyer[end]) // stride]
        return weights

    def descendants(self, k: int, h: int, j: int) -> Tuple[int, int]:
        """[first, last) codes of the stage-j descendants of stage-k history ``h``."""
        block = 1
        for t in range(k + 1, j + 1):
            block *= self.sizes[t]
        return h * block, (h + 1) * block

    def block_size(self, k: int, j: int) -> int:
        block = 1
        for t in range(k + 1, j + 1):
            block *= self.sizes[t]
        return block

    # ------------------------------------------------------------------
    # Profiles and columns
    # ------------------------------------------------------------------
    def profile_code(self, k: int, histories) -> np.ndarray:
        """Profile code(s) from per-buyer history codes (broadcasting)."""
        code = 0
        for b in range(self.n):
            code = code * self.per_buyer[k] + np.asarray(histories[b])
        return code

    def profile_histories(self, k: int, code: int) -> Tuple[int, ...]:
        digits = []
        for _ in range(self.n):
            code, h = divmod(code, self.per_buyer[k])
            digits.append(h)
        return tuple(reversed(digits))

    def profile_prob(self, k: int) -> np.ndarray:
        """f(profile) for every stage-k profile code, as a product over buyers."""
        probs = self._probs[k]
        total = probs
        for _ in range(self.n - 1):
            total = np.outer(total, probs).ravel()
        return total

    def x_column(self, k: int, profile, buyer: int):
        return self.x_offsets[k] + np.asarray(profile) * self.n + buyer

    def p_column(self, k: int, profile, buyer: int):
        return self.x_count + self.x_column(k, profile, buyer)

    @property
    def column_count(self) -> int:
        return 2 * self.x_count

    def column_label(self, column: int) -> Tuple[str, int, int, Tuple[Tuple[float, ...], ...]]:
        """(variable, stage, buyer, value history per buyer) of a column."""
        variable = 'x' if column < self.x_count else 'p'
        column %= self.x_count
        k = max(t for t in range(self.m) if self.x_offsets[t] <= column)
        profile, buyer = divmod(column - self.x_offsets[k], self.n)
        histories = self.profile_histories(k, profile)
        values = tuple(self.process.values_of(self.decode(k, h)) for h in histories)
        return variable, k, buyer, values
