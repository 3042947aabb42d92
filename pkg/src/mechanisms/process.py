"""
Per-buyer stage-value processes and dynamic-auction instances.

A ``ValueProcess`` describes one buyer's values over m stages: the stage-1
law and, for each later stage, the law of the stage value given the earlier
values. All buyers share the process and draw independently of each other.

Internally every stage has a fixed ascending support (positive-mass points
only) and conditionals are probability vectors over that support, keyed by
tuples of support indices.
"""

import itertools
import json
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from src.distributions.discrete import DiscreteDist
from src.utils.exceptions import ConfigError, DomainError

IR_MODES = ('ex-post', 'ex-ante')

IndexHistory = Tuple[int, ...]


def _dist_document(dist: DiscreteDist) -> Dict[str, List[float]]:
    return {'support': list(dist.support), 'probs': list(dist.probs)}


def _dist_from_document(doc: Mapping[str, Any], where: str) -> DiscreteDist:
    if not isinstance(doc, Mapping) or set(doc) != {'support', 'probs'}:
        raise ConfigError(f"{where}: expected an object with exactly 'support' and 'probs'")
    try:
        return DiscreteDist(tuple(doc['support']), tuple(doc['probs']))
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{where}: {e}") from e


@dataclass(frozen=True)
class ValueProcess:
    """
    Stage supports plus conditional stage laws for a single buyer.

    Attributes:
        supports: Ascending positive-mass support values per stage
        first: Probability vector of stage 1 over ``supports[0]``
        conditionals: For stage k ≥ 2, probability vectors over ``supports[k]``
            keyed by the index history of stages 1..k−1. Missing histories
            (unreachable ones) fall back to the stage marginal.
        independent: True when every stage ignores the history
        declared: Value histories given explicitly at construction (kept for
            the document round trip)
    """

    supports: Tuple[Tuple[float, ...], ...]
    first: Tuple[float, ...]
    conditionals: Dict[IndexHistory, Tuple[float, ...]] = field(default_factory=dict)
    independent: bool = True
    marginal_probs: Tuple[Tuple[float, ...], ...] = ()
    declared: Tuple[Tuple[float, ...], ...] = ()

    # ------------------------------------------------------------------
    # Constructors
    # ------------------------------------------------------------------
    @classmethod
    def independent_stages(cls, marginals: Sequence[DiscreteDist]) -> 'ValueProcess':
        """Stages drawn independently from ``marginals``."""
        if not marginals:
            raise DomainError("a value process needs at least one stage")
        cleaned = [d.without_zero_mass() for d in marginals]
        supports = tuple(d.support for d in cleaned)
        probs = tuple(d.probs for d in cleaned)
        return cls(
            supports=supports,
            first=probs[0],
            conditionals={},
            independent=True,
            marginal_probs=probs,
        )

    @classmethod
    def correlated(
        cls,
        first: DiscreteDist,
        conditionals: Mapping[Tuple[float, ...], DiscreteDist],
    ) -> 'ValueProcess':
        """
        Build from the stage-1 law and explicit conditionals keyed by value histories.

        Every positive-probability history must have a conditional; stage
        supports are the union of the positive-mass points of the declared
        conditionals.

        Raises:
            DomainError: If a reachable history has no conditional
        """
        first = first.without_zero_mass()
        by_stage: Dict[int, Dict[Tuple[float, ...], DiscreteDist]] = {}
        for history, dist in conditionals.items():
            history = tuple(float(v) for v in history)
            by_stage.setdefault(len(history), {})[history] = dist.without_zero_mass()
        m = 1 + (max(by_stage) if by_stage else 0)
        if sorted(by_stage) != list(range(1, m)):
            raise DomainError(f"conditionals must cover consecutive stages, got lengths {sorted(by_stage)}")

        supports: List[Tuple[float, ...]] = [first.support]
        for k in range(1, m):
            values = sorted({v for d in by_stage[k].values() for v in d.support})
            supports.append(tuple(values))

        table: Dict[IndexHistory, Tuple[float, ...]] = {}
        for k in range(1, m):
            position = {v: j for j, v in enumerate(supports[k])}
            for history, dist in by_stage[k].items():
                try:
                    key = tuple(_index_in(supports[t], v) for t, v in enumerate(history))
                except DomainError:
                    raise DomainError(f"history {history} uses values outside the stage supports")
                vector = [0.0] * len(supports[k])
                for v, p in zip(dist.support, dist.probs):
                    vector[position[v]] = p
                table[key] = tuple(vector)

        process = cls(
            supports=tuple(supports),
            first=first.probs,
            conditionals=table,
            independent=False,
            declared=tuple(sorted(tuple(float(v) for v in h) for h in conditionals)),
        )
        process = process._with_marginals()
        process._check_reachable_covered()
        return process

    def _with_marginals(self) -> 'ValueProcess':
        marginals = [self.first]
        for k in range(1, self.m):
            total = np.zeros(len(self.supports[k]))
            for history in itertools.product(*[range(len(s)) for s in self.supports[:k]]):
                weight = self._path_prob_declared(history)
                if weight > 0:
                    total += weight * np.asarray(self.conditionals[history])
            marginals.append(tuple(float(p) for p in total / total.sum()))
        return ValueProcess(
            supports=self.supports,
            first=self.first,
            conditionals=self.conditionals,
            independent=self.independent,
            marginal_probs=tuple(marginals),
            declared=self.declared,
        )

    def _path_prob_declared(self, history: IndexHistory) -> float:
        prob = self.first[history[0]]
        for t in range(1, len(history)):
            if prob <= 0:
                return 0.0
            vector = self.conditionals.get(history[:t])
            if vector is None:
                raise DomainError(f"reachable history {self.values_of(history[:t])} has no conditional law")
            prob *= vector[history[t]]
        return prob

    def _check_reachable_covered(self) -> None:
        for k in range(1, self.m):
            for history in itertools.product(*[range(len(s)) for s in self.supports[:k]]):
                if self._path_prob_declared(history) > 0 and history not in self.conditionals:
                    raise DomainError(
                        f"reachable history {self.values_of(history)} has no conditional law"
                    )

    # ------------------------------------------------------------------
    # Queries
    # ------------------------------------------------------------------
    @property
    def m(self) -> int:
        return len(self.supports)

    def stage_size(self, k: int) -> int:
        return len(self.supports[k])

    def values_of(self, history: IndexHistory) -> Tuple[float, ...]:
        return tuple(self.supports[t][i] for t, i in enumerate(history))

    def conditional(self, history: IndexHistory) -> np.ndarray:
        """f(· | history) over the support of stage len(history)."""
        k = len(history)
        if k == 0:
            return np.asarray(self.first, dtype=float)
        if self.independent:
            return np.asarray(self.marginal_probs[k], dtype=float)
        vector = self.conditionals.get(tuple(history))
        if vector is None:
            return np.asarray(self.marginal_probs[k], dtype=float)
        return np.asarray(vector, dtype=float)

    def history_prob(self, history: IndexHistory) -> float:
        """f(v_{≤k}) for an index history."""
        prob = 1.0
        for t in range(len(history)):
            prob *= float(self.conditional(history[:t])[history[t]])
        return prob

    def history_prob_from(self, start: IndexHistory, rest: IndexHistory) -> float:
        """f(rest | start): probability of continuing ``start`` with ``rest``."""
        prob = 1.0
        history = tuple(start)
        for v in rest:
            prob *= float(self.conditional(history)[v])
            history = history + (v,)
        return prob

    def marginal(self, k: int) -> DiscreteDist:
        """Unconditional law of the stage-k value (0-based)."""
        return DiscreteDist(self.supports[k], self.marginal_probs[k])

    def marginals(self) -> List[DiscreteDist]:
        return [self.marginal(k) for k in range(self.m)]

    def conditional_dist(self, history: IndexHistory) -> DiscreteDist:
        k = len(history)
        return DiscreteDist(self.supports[k], tuple(self.conditional(history)))

    def scaled(self, factor: float) -> 'ValueProcess':
        if factor <= 0:
            raise DomainError(f"scale factor must be positive, got {factor}")
        return ValueProcess(
            supports=tuple(tuple(v * factor for v in s) for s in self.supports),
            first=self.first,
            conditionals=dict(self.conditionals),
            independent=self.independent,
            marginal_probs=self.marginal_probs,
            declared=tuple(tuple(v * factor for v in h) for h in self.declared),
        )

    # ------------------------------------------------------------------
    # Documents
    # ------------------------------------------------------------------
    def to_document(self) -> Dict[str, Any]:
        if self.independent:
            return {
                'type': 'independent',
                'stages': [_dist_document(self.marginal(k)) for k in range(self.m)],
            }
        entries = []
        for history in self.declared:
            key = tuple(_index_in(self.supports[t], v) for t, v in enumerate(history))
            dist = self.conditional_dist(key).without_zero_mass()
            entries.append({'history': list(history), **_dist_document(dist)})
        return {
            'type': 'conditional',
            'first': _dist_document(DiscreteDist(self.supports[0], self.first)),
            'conditionals': entries,
        }

    @classmethod
    def from_document(cls, doc: Mapping[str, Any], where: str = 'process') -> 'ValueProcess':
        if not isinstance(doc, Mapping):
            raise ConfigError(f"{where}: expected an object")
        kind = doc.get('type')
        if kind == 'independent':
            _reject_unknown(doc, {'type', 'stages'}, where)
            stages = doc.get('stages')
            if not isinstance(stages, list) or not stages:
                raise ConfigError(f"{where}.stages: expected a non-empty list")
            return cls.independent_stages(
                [_dist_from_document(s, f"{where}.stages[{i}]") for i, s in enumerate(stages)]
            )
        if kind == 'conditional':
            _reject_unknown(doc, {'type', 'first', 'conditionals'}, where)
            first = _dist_from_document(doc.get('first'), f"{where}.first")
            conditionals = {}
            for i, entry in enumerate(doc.get('conditionals') or []):
                path = f"{where}.conditionals[{i}]"
                if not isinstance(entry, Mapping) or 'history' not in entry:
                    raise ConfigError(f"{path}: expected an object with 'history', 'support', 'probs'")
                _reject_unknown(entry, {'history', 'support', 'probs'}, path)
                dist = _dist_from_document(
                    {'support': entry.get('support'), 'probs': entry.get('probs')}, path
                )
                conditionals[tuple(float(v) for v in entry['history'])] = dist
            try:
                return cls.correlated(first, conditionals)
            except DomainError as e:
                raise ConfigError(f"{where}: {e}") from e
        raise ConfigError(f"{where}.type: expected 'independent' or 'conditional', got {kind!r}")


def _index_in(support: Sequence[float], value: float) -> int:
    for j, v in enumerate(support):
        if v == value:
            return j
    raise DomainError(f"value {value!r} not in stage support {tuple(support)}")


def _reject_unknown(doc: Mapping[str, Any], allowed: set, where: str) -> None:
    unknown = sorted(set(doc) - allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")


@dataclass(frozen=True)
class DynamicInstance:
    """
    n i.i.d. buyers sharing ``process``, one item sold per stage.

    Example:
        >>> stage = DiscreteDist.uniform([1.0, 2.0])
        >>> inst = DynamicInstance(1, ValueProcess.independent_stages([stage, stage]))
        >>> inst.m
        2
    """

    n: int
    process: ValueProcess
    ir_mode: str = 'ex-post'
    name: str = field(default='', compare=False)

    def __post_init__(self):
        if self.n < 1:
            raise DomainError(f"need at least one buyer, got n={self.n}")
        if self.ir_mode not in IR_MODES:
            raise DomainError(f"ir_mode must be one of {IR_MODES}, got {self.ir_mode!r}")

    @property
    def m(self) -> int:
        return self.process.m

    @property
    def independent(self) -> bool:
        return self.process.independent

    def marginals(self) -> List[DiscreteDist]:
        return self.process.marginals()

    def with_ir_mode(self, ir_mode: str) -> 'DynamicInstance':
        return DynamicInstance(self.n, self.process, ir_mode, self.name)

    def with_buyers(self, n: int) -> 'DynamicInstance':
        return DynamicInstance(n, self.process, self.ir_mode, self.name)

    def scaled(self, factor: float) -> 'DynamicInstance':
        return DynamicInstance(self.n, self.process.scaled(factor), self.ir_mode, self.name)

    def history_count(self) -> int:
        """Number of full profile histories over all stages."""
        total, per_buyer = 0, 1
        for k in range(self.m):
            per_buyer *= self.process.stage_size(k)
            total += per_buyer ** self.n
        return total

    def to_document(self) -> Dict[str, Any]:
        doc = {
            'n': self.n,
            'm': self.m,
            'ir_mode': self.ir_mode,
            'process': self.process.to_document(),
        }
        if self.name:
            doc = {'name': self.name, **doc}
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_document(), indent=2)

    @classmethod
    def from_document(cls, doc: Mapping[str, Any], where: str = 'instance') -> 'DynamicInstance':
        """
        Parse an instance document.

        Raises:
            ConfigError: On unknown keys, missing fields or inconsistent values
        """
        if not isinstance(doc, Mapping):
            raise ConfigError(f"{where}: expected an object")
        _reject_unknown(doc, {'name', 'n', 'm', 'ir_mode', 'process'}, where)
        for key in ('n', 'process'):
            if key not in doc:
                raise ConfigError(f"{where}.{key}: required field missing")
        n = doc['n']
        if not isinstance(n, int) or isinstance(n, bool) or n < 1:
            raise ConfigError(f"{where}.n: expected a positive integer, got {n!r}")
        ir_mode = doc.get('ir_mode', 'ex-post')
        if ir_mode not in IR_MODES:
            raise ConfigError(f"{where}.ir_mode: expected one of {IR_MODES}, got {ir_mode!r}")
        process = ValueProcess.from_document(doc['process'], f"{where}.process")
        if 'm' in doc and doc['m'] != process.m:
            raise ConfigError(f"{where}.m: declared {doc['m']} stages but the process has {process.m}")
        return cls(n, process, ir_mode, doc.get('name', ''))

    @classmethod
    def from_json(cls, text: str) -> 'DynamicInstance':
        return cls.from_document(json.loads(text))
