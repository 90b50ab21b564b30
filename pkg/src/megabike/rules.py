"""Matrix rule engine.

A rule is a set of affine clauses ``A @ x (op) 0`` over an input vector whose
entries are read from an entity through named getters. The last input is
always the constant 1, so bounds live in the final matrix column.
"""

from __future__ import annotations

import dataclasses
import enum
import functools
import math
import operator
import uuid
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Iterator, Sequence

import numpy as np
import scipy.sparse as sp

from megabike import _kernels
from megabike.errors import (
    DimensionMismatch,
    DuplicateRuleID,
    EmptyRuleList,
    GetterUndefined,
    ImmutableRule,
    IndexOutOfRange,
    MissingConstantColumn,
)

EQ_TOL = _kernels.EQ_TOL
CONSTANT = "one"


class Comparator(enum.Enum):
    LT = "<"
    GT = ">"
    LEQ = "<="
    GEQ = ">="
    EQ = "="

    @property
    def code(self) -> int:
        return _COMPARATOR_CODES[self]

    @classmethod
    def parse(cls, token: "Comparator | str") -> "Comparator":
        if isinstance(token, Comparator):
            return token
        token = token.strip()
        if token == "==":
            token = "="
        return cls(token)

    def holds(self, value: float) -> bool:
        """Compare ``value`` against zero."""
        if self is Comparator.LT:
            return value < 0.0
        if self is Comparator.GT:
            return value > 0.0
        if self is Comparator.LEQ:
            return value <= 0.0
        if self is Comparator.GEQ:
            return value >= 0.0
        return abs(value) <= EQ_TOL


_COMPARATOR_CODES = {
    Comparator.LT: _kernels.LT,
    Comparator.GT: _kernels.GT,
    Comparator.LEQ: _kernels.LEQ,
    Comparator.GEQ: _kernels.GEQ,
    Comparator.EQ: _kernels.EQ,
}


class Action(enum.Enum):
    """Governed decision kinds a rule can be bound to."""

    TARGET_SELECTION = "target_selection"
    ALLOCATION = "allocation"
    ELECTION = "election"
    KICKOFF = "kickoff"
    MOVEMENT_DIRECTIVE = "movement_directive"


ACTIONS = tuple(Action)


@dataclass(frozen=True)
class InputBinding:
    """A named getter producing one real input from an entity."""

    name: str
    getter: Callable[[Any], float] = field(compare=False, repr=False)

    def resolve(self, entity: Any) -> float:
        try:
            return float(self.getter(entity))
        except AttributeError as exc:
            raise GetterUndefined(
                f"binding {self.name!r} undefined for {type(entity).__name__}"
            ) from exc


def _constant(_entity: Any) -> float:
    return 1.0


# Fixed vocabulary usable from ruleset files.
BINDINGS: dict[str, InputBinding] = {
    b.name: b
    for b in (
        InputBinding("distance", operator.attrgetter("distance")),
        InputBinding("payoff", operator.attrgetter("payoff")),
        InputBinding("energy", operator.attrgetter("energy")),
        InputBinding("contribution", operator.attrgetter("contribution")),
        InputBinding("occupants", operator.attrgetter("occupant_count")),
        InputBinding("free_seats", operator.attrgetter("free_seats")),
        InputBinding(CONSTANT, _constant),
    )
}


def binding(name: "str | InputBinding") -> InputBinding:
    if isinstance(name, InputBinding):
        return name
    try:
        return BINDINGS[name]
    except KeyError:
        raise KeyError(f"unknown input binding {name!r}") from None


@dataclass(frozen=True, eq=False)
class Rule:
    rule_id: str
    name: str
    is_mutable: bool
    action: Action
    inputs: tuple[InputBinding, ...]
    matrix: np.ndarray
    comparators: tuple[Comparator, ...]
    ops: np.ndarray = field(repr=False)

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    @functools.cached_property
    def input_names(self) -> tuple[str, ...]:
        return tuple(b.name for b in self.inputs)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Rule):
            return NotImplemented
        return (
            self.rule_id == other.rule_id
            and self.name == other.name
            and self.is_mutable == other.is_mutable
            and self.action == other.action
            and self.input_names == other.input_names
            and self.comparators == other.comparators
            and self.matrix.shape == other.matrix.shape
            and self.matrix.tobytes() == other.matrix.tobytes()
        )

    def __hash__(self) -> int:
        return hash(self.rule_id)


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def build_rule(
    name: str,
    action: Action | str,
    mutable: bool,
    inputs: Sequence[InputBinding | str],
    matrix: Sequence[Sequence[float]] | np.ndarray,
    comparators: Sequence[Comparator | str],
    rule_id: str | None = None,
) -> Rule:
    """Validate the pieces of a rule and assemble it with a fresh id."""
    bindings = tuple(binding(b) for b in inputs)
    comps = tuple(Comparator.parse(c) for c in comparators)
    rows = [list(r) for r in matrix]
    if not rows or any(len(r) != len(rows[0]) for r in rows):
        raise DimensionMismatch("matrix must be a non-empty rectangle")
    mat = np.array(rows, dtype=np.float64)
    n, m = mat.shape
    if m == 0:
        raise DimensionMismatch("matrix has no columns")
    if len(comps) != n:
        raise DimensionMismatch(f"{n} clauses but {len(comps)} comparators")
    if len(bindings) != m:
        raise DimensionMismatch(f"{m} columns but {len(bindings)} inputs")
    if bindings[-1].name != CONSTANT:
        raise MissingConstantColumn(f"last input must be {CONSTANT!r}")
    ops = np.array([c.code for c in comps], dtype=np.int64)
    return Rule(
        rule_id=rule_id or str(uuid.uuid4()),
        name=name,
        is_mutable=bool(mutable),
        action=Action(action),
        inputs=bindings,
        matrix=_frozen(mat),
        comparators=comps,
        ops=_frozen(ops),
    )


def null_rule(
    action: Action = Action.TARGET_SELECTION,
    inputs: Sequence[str] = ("distance", "payoff", CONSTANT),
    name: str = "null",
) -> Rule:
    """All-zero rule with one equality clause; passes for anything."""
    return build_rule(name, action, False, inputs, [[0.0] * len(inputs)], ["="])


def radius_rule(radius: float = 1000.0, mutable: bool = True) -> Rule:
    """``distance - radius <= 0`` over lootbox candidates."""
    return build_rule(
        f"radius-{radius:g}",
        Action.TARGET_SELECTION,
        mutable,
        ("distance", CONSTANT),
        [[1.0, -float(radius)]],
        ["<="],
    )


# ---------------------------------------------------------------------------
# evaluation


@dataclass
class EvalStats:
    """Work counters accumulated across evaluations."""

    rules_evaluated: int = 0
    entries_visited: int = 0

    def add(self, other: "EvalStats") -> None:
        self.rules_evaluated += other.rules_evaluated
        self.entries_visited += other.entries_visited


@dataclass(frozen=True)
class EvalResult:
    passed: bool
    clause_results: tuple[bool, ...]


def input_vector(rule: Rule, entity: Any, strict: bool = True) -> np.ndarray:
    out = np.empty(len(rule.inputs))
    for j, b in enumerate(rule.inputs):
        try:
            out[j] = b.resolve(entity)
        except GetterUndefined:
            if strict:
                raise
            out[j] = math.nan
    return out


def evaluate(
    rule: Rule, entity: Any, strict: bool = True, stats: EvalStats | None = None
) -> EvalResult:
    """Evaluate every clause of ``rule`` on ``entity`` with early exit.

    With ``strict=False`` an undefined getter makes its clauses pass by
    default instead of raising.
    """
    return evaluate_vector(rule, input_vector(rule, entity, strict), stats)


def evaluate_vector(
    rule: Rule, x: np.ndarray, stats: EvalStats | None = None
) -> EvalResult:
    results = np.zeros(rule.matrix.shape[0], dtype=np.bool_)
    k, visits = _kernels.clauses_kernel(
        rule.matrix, rule.ops, np.ascontiguousarray(x, dtype=np.float64), results
    )
    if stats is not None:
        stats.rules_evaluated += 1
        stats.entries_visited += int(visits)
    clauses = tuple(bool(r) for r in results[:k])
    return EvalResult(passed=all(clauses), clause_results=clauses)


# ---------------------------------------------------------------------------
# action-stratified registry


class RuleCache:
    """Rules bucketed by action, plus an id index.

    Buckets and registration order are kept in step so that retrieval by
    action is a dict lookup and the full-cache walk is deterministic.
    """

    def __init__(self, rules: Iterable[Rule] = ()) -> None:
        self._by_action: dict[Action, list[Rule]] = {}
        self._by_id: dict[str, Rule] = {}
        self._order: list[str] = []
        self._all: tuple[Rule, ...] | None = None
        for r in rules:
            self.register(r)

    def register(self, rule: Rule) -> None:
        if rule.rule_id in self._by_id:
            raise DuplicateRuleID(rule.rule_id)
        self._by_id[rule.rule_id] = rule
        self._by_action.setdefault(rule.action, []).append(rule)
        self._order.append(rule.rule_id)
        self._all = None

    def replace(self, rule: Rule) -> None:
        """Swap in a new value for an already-registered rule id."""
        old = self._by_id[rule.rule_id]
        if old.action is not rule.action:
            raise ValueError("replacement must keep the rule's action")
        bucket = self._by_action[rule.action]
        bucket[bucket.index(old)] = rule
        self._by_id[rule.rule_id] = rule
        self._all = None

    def rules_for_action(self, action: Action) -> list[Rule]:
        return self._by_action.get(action, _EMPTY)

    def all_rules(self) -> tuple[Rule, ...]:
        if self._all is None:
            self._all = tuple(self._by_id[i] for i in self._order)
        return self._all

    def get(self, rule_id: str) -> Rule:
        return self._by_id[rule_id]

    def __contains__(self, rule_id: object) -> bool:
        return rule_id in self._by_id

    def __iter__(self) -> Iterator[Rule]:
        return iter(self.all_rules())

    def __len__(self) -> int:
        return len(self._by_id)

    def copy(self) -> "RuleCache":
        # Rules are immutable values, so copying the containers isolates caches.
        new = RuleCache()
        new._by_action = {a: list(b) for a, b in self._by_action.items()}
        new._by_id = dict(self._by_id)
        new._order = list(self._order)
        return new


_EMPTY: list[Rule] = []


def rules_for_action(cache: RuleCache, action: Action) -> list[Rule]:
    return cache.rules_for_action(action)


def prune(
    candidates: Sequence[Any],
    cache: RuleCache,
    action: Action,
    stratified: bool = True,
    stats: EvalStats | None = None,
) -> list[Any]:
    """Keep the candidates that pass every rule governing ``action``.

    Non-stratified mode walks the whole cache in registration order and lets
    off-action rules pass wherever their getters do not apply.
    """
    rules = cache.rules_for_action(action) if stratified else cache.all_rules()
    return prune_with(candidates, rules, strict=stratified, stats=stats)


def prune_with(
    candidates: Sequence[Any],
    rules: Sequence[Rule],
    strict: bool = True,
    stats: EvalStats | None = None,
) -> list[Any]:
    if not rules or not candidates:
        return list(candidates)
    active = np.ones(len(candidates), dtype=np.bool_)
    columns: dict[str, np.ndarray] = {}
    blocks: dict[tuple[str, ...], np.ndarray] = {}
    rules_done = 0
    visits = 0
    n_active = len(candidates)
    for rule in rules:
        if n_active == 0:
            break
        names = rule.input_names
        X = blocks.get(names)
        if X is None:
            for b in rule.inputs:
                if b.name not in columns:
                    columns[b.name] = _column(b, candidates, strict)
            X = np.stack([columns[n] for n in names])
            blocks[names] = X
        rules_done += n_active
        v, n_active = _kernels.batch_kernel(rule.matrix, rule.ops, X, active)
        visits += v
    if stats is not None:
        stats.rules_evaluated += rules_done
        stats.entries_visited += int(visits)
    return [c for c, keep in zip(candidates, active) if keep]


def _column(b: InputBinding, candidates: Sequence[Any], strict: bool) -> np.ndarray:
    if b.name == CONSTANT:
        return np.ones(len(candidates))
    getter = b.getter
    try:
        return np.array([getter(c) for c in candidates], dtype=np.float64)
    except AttributeError:
        pass
    out = np.empty(len(candidates))
    for i, c in enumerate(candidates):
        try:
            out[i] = b.resolve(c)
        except GetterUndefined:
            if strict:
                raise
            out[i] = math.nan
    return out


# ---------------------------------------------------------------------------
# stacking


@dataclass(frozen=True)
class StackedRuleSystem:
    """Block-diagonal union of several rules sharing one constant column."""

    matrix: sp.csr_matrix
    inputs: tuple[InputBinding, ...]
    comparators: tuple[Comparator, ...]
    source_rule_ids: tuple[str, ...]
    column_blocks: tuple[tuple[int, int], ...]
    ops: np.ndarray = field(repr=False)

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape


def stack(rules: Sequence[Rule]) -> StackedRuleSystem:
    if not rules:
        raise EmptyRuleList("cannot stack an empty rule list")
    n_total = sum(r.matrix.shape[0] for r in rules)
    m_total = sum(r.matrix.shape[1] - 1 for r in rules) + 1
    rows, cols, vals = [], [], []
    inputs: list[InputBinding] = []
    comps: list[Comparator] = []
    owners: list[str] = []
    blocks: list[tuple[int, int]] = []
    row0 = col0 = 0
    for r in rules:
        n, m = r.matrix.shape
        lin = sp.coo_matrix(r.matrix[:, :-1])
        rows.append(lin.row + row0)
        cols.append(lin.col + col0)
        vals.append(lin.data)
        const = r.matrix[:, -1]
        nz = np.flatnonzero(const)
        rows.append(nz + row0)
        cols.append(np.full(nz.size, m_total - 1))
        vals.append(const[nz])
        inputs.extend(r.inputs[:-1])
        comps.extend(r.comparators)
        owners.extend([r.rule_id] * n)
        blocks.append((col0, col0 + m - 1))
        row0 += n
        col0 += m - 1
    inputs.append(BINDINGS[CONSTANT])
    mat = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_total, m_total),
    )
    mat.sort_indices()
    return StackedRuleSystem(
        matrix=mat,
        inputs=tuple(inputs),
        comparators=tuple(comps),
        source_rule_ids=tuple(owners),
        column_blocks=tuple(blocks),
        ops=np.array([c.code for c in comps], dtype=np.int64),
    )


def joint_vector(
    system: StackedRuleSystem, entities: Any, strict: bool = True
) -> np.ndarray:
    """Resolve the merged input vector.

    ``entities`` is either one entity used for every block or a sequence with
    one entity per source rule.
    """
    per_block = (
        list(entities)
        if isinstance(entities, (list, tuple))
        else [entities] * len(system.column_blocks)
    )
    if len(per_block) != len(system.column_blocks):
        raise DimensionMismatch(
            f"{len(system.column_blocks)} source rules but {len(per_block)} entities"
        )
    x = np.empty(system.matrix.shape[1])
    for (lo, hi), ent in zip(system.column_blocks, per_block):
        for j in range(lo, hi):
            try:
                x[j] = system.inputs[j].resolve(ent)
            except GetterUndefined:
                if strict:
                    raise
                x[j] = math.nan
    x[-1] = 1.0
    return x


def evaluate_stacked(
    system: StackedRuleSystem, entities: Any, strict: bool = True
) -> bool:
    return evaluate_stacked_vector(system, joint_vector(system, entities, strict))


def evaluate_stacked_vector(system: StackedRuleSystem, x: np.ndarray) -> bool:
    m = system.matrix
    passed, _ = _kernels.csr_kernel(
        m.data, m.indices, m.indptr, system.ops, np.asarray(x, dtype=np.float64)
    )
    return bool(passed)


# ---------------------------------------------------------------------------
# mutation


def _check_mutable(rule: Rule) -> None:
    if not rule.is_mutable:
        raise ImmutableRule(f"rule {rule.name!r} is immutable")


def _check_index(rule: Rule, row: int, col: int | None = None) -> None:
    n, m = rule.matrix.shape
    if not 0 <= row < n or (col is not None and not 0 <= col < m):
        raise IndexOutOfRange(f"({row}, {col}) outside {n}x{m} rule matrix")


def mutate_entry(rule: Rule, row: int, col: int, value: float) -> Rule:
    """Return a copy of ``rule`` with one matrix entry replaced."""
    _check_mutable(rule)
    _check_index(rule, row, col)
    mat = rule.matrix.copy()
    mat[row, col] = value
    return dataclasses.replace(rule, matrix=_frozen(mat))


def apply_slack(rule: Rule, row: int, fraction: float) -> Rule:
    """Scale the bound of clause ``row`` by ``1 + fraction``.

    For a ``<=`` bound written as a negative constant, positive fractions
    loosen and negative ones tighten.
    """
    _check_mutable(rule)
    _check_index(rule, row)
    if fraction == 0:
        return rule
    col = rule.matrix.shape[1] - 1
    return mutate_entry(rule, row, col, rule.matrix[row, col] * (1.0 + fraction))


def bound_of(rule: Rule, row: int = 0) -> float:
    """The magnitude encoded in a clause's constant column."""
    return -float(rule.matrix[row, -1])
