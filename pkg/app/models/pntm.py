"""Probabilistic noisy Turing machines with lazily applied, timestamp-boosted noise.

Each tape cell remembers the last time a head visited it.  Before a step,
the cell under every head is resampled: with probability ``(1-ε)^k`` (``k``
the time since the last visit) it keeps its symbol, otherwise it becomes a
uniformly chosen symbol of Γ.  The step taken at time ``t`` stamps the cells
it writes with ``t`` and advances the clock, so every head cell has a gap of
at least one and every read-vector has positive probability.  This is what
makes the finite control graph an exact abstraction for reachability.
"""

from __future__ import annotations

import enum
import itertools
import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Iterable, Optional, Sequence

import networkx as nx
from pydantic import BaseModel, ConfigDict, PrivateAttr, field_validator, model_validator

from app.config import get_settings
from app.core import (
    DecisivenessCertificate,
    Distribution,
    MalformedState,
    ModelValidationError,
    Objective,
    QualQuery,
    Side,
    TriBool,
)

_LOGGER = logging.getLogger(__name__)

BLANK = "#"


@dataclass(frozen=True, slots=True, order=True)
class TapeConfig:
    head: int
    origin: int
    cells: tuple[str, ...]
    stamps: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.cells) != len(self.stamps):
            raise MalformedState("every visited cell needs a timestamp")
        if not self.origin <= self.head < self.origin + len(self.cells):
            raise MalformedState(f"head {self.head} outside the visited region")

    @property
    def current(self) -> str:
        return self.cells[self.head - self.origin]

    @property
    def head_stamp(self) -> int:
        return self.stamps[self.head - self.origin]

    @property
    def word(self) -> str:
        return "".join(self.cells)


@dataclass(frozen=True, slots=True, order=True)
class PntmState:
    control: str
    time: int
    tapes: tuple[TapeConfig, ...]

    def __str__(self) -> str:
        tapes = " ".join(
            f"{tape.word[: tape.head - tape.origin]}[{tape.current}]{tape.word[tape.head - tape.origin + 1:]}"
            for tape in self.tapes
        )
        return f"({self.control}, t={self.time}, {tapes})"


@dataclass(frozen=True, slots=True)
class NtmTransition:
    src: str
    read: tuple[str, ...]
    dst: str
    write: tuple[str, ...]
    moves: tuple[int, ...]
    weight: int = 1


def initial_state(control: str, contents: Sequence[str], heads: Optional[Sequence[int]] = None) -> PntmState:
    """Start state at time 1 with every given cell stamped 0."""

    heads = list(heads) if heads is not None else [0] * len(contents)
    if len(heads) != len(contents):
        raise MalformedState("one head position per tape is required")
    tapes = []
    for word, head in zip(contents, heads):
        cells = list(word) or [BLANK]
        if head < 0:
            raise MalformedState("initial heads must not be left of the input")
        while head >= len(cells):
            cells.append(BLANK)
        tapes.append(TapeConfig(head, 0, tuple(cells), (0,) * len(cells)))
    return PntmState(control, 1, tuple(tapes))


class Pntm(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    control_states: tuple[str, ...]
    input_alphabet: tuple[str, ...]
    tape_alphabet: tuple[str, ...]
    tapes: int
    transitions: tuple[NtmTransition, ...]
    epsilon: Fraction
    initial: PntmState

    _by_read: dict[tuple[str, tuple[str, ...]], tuple[NtmTransition, ...]] = PrivateAttr(default_factory=dict)

    @field_validator("epsilon")
    @classmethod
    def _epsilon_in_range(cls, value: Fraction) -> Fraction:
        if not 0 < value < 1:
            raise ValueError("ε must satisfy 0<ε<1")
        return value

    @field_validator("tapes")
    @classmethod
    def _positive_tapes(cls, value: int) -> int:
        if value < 1:
            raise ValueError("at least one tape is required")
        return value

    @model_validator(mode="after")
    def _check_structure(self) -> "Pntm":
        states = set(self.control_states)
        gamma = set(self.tape_alphabet)
        if not states:
            raise ValueError("at least one control state is required")
        if len(gamma) != len(self.tape_alphabet) or any(len(g) != 1 for g in gamma):
            raise ValueError("tape symbols must be distinct single characters")
        if BLANK not in gamma:
            raise ValueError(f"tape alphabet must contain the blank {BLANK!r}")
        if not set(self.input_alphabet) <= gamma:
            raise ValueError("input alphabet must be part of the tape alphabet")
        for t in self.transitions:
            label = f"{t.src} read {''.join(t.read)} -> {t.dst}"
            if t.src not in states or t.dst not in states:
                raise ValueError(f"{label}: undeclared control state")
            if not len(t.read) == len(t.write) == len(t.moves) == self.tapes:
                raise ValueError(f"{label}: expected {self.tapes} tape(s)")
            if not set(t.read) <= gamma or not set(t.write) <= gamma:
                raise ValueError(f"{label}: symbol outside the tape alphabet")
            if any(d not in (-1, 0, 1) for d in t.moves):
                raise ValueError(f"{label}: moves must be -1, 0 or +1")
            if t.weight <= 0:
                raise ValueError(f"{label}: weight must be positive")
        init = self.initial
        if init.control not in states:
            raise ValueError(f"initial control state {init.control!r} is undeclared")
        if len(init.tapes) != self.tapes:
            raise ValueError(f"initial state must describe {self.tapes} tape(s)")
        for tape in init.tapes:
            if not set(tape.cells) <= gamma:
                raise ValueError("initial tape uses symbols outside the tape alphabet")
            if any(s > init.time for s in tape.stamps):
                raise ValueError("timestamps may not exceed the current time")
        return self

    def model_post_init(self, __context: Any) -> None:
        index: dict[tuple[str, tuple[str, ...]], list[NtmTransition]] = {}
        for t in self.transitions:
            index.setdefault((t.src, t.read), []).append(t)
        self._by_read = {key: tuple(ts) for key, ts in index.items()}

    def matching(self, control: str, read: tuple[str, ...]) -> tuple[NtmTransition, ...]:
        return self._by_read.get((control, read), ())

    def read_vectors(self) -> Iterable[tuple[str, ...]]:
        return itertools.product(self.tape_alphabet, repeat=self.tapes)


# ----------------------------------------------------------------------
# Validation
# ----------------------------------------------------------------------
def missing_rows(m: Pntm) -> list[tuple[str, tuple[str, ...]]]:
    return [(q, r) for q in m.control_states for r in m.read_vectors() if not m.matching(q, r)]


def ensure_total(m: Pntm, *, auto_total: bool = False) -> Pntm:
    """Reject (or complete with stay-put self-loops) missing (state, read-vector) rows."""

    missing = missing_rows(m)
    if not missing:
        return m
    if not auto_total:
        q, r = missing[0]
        raise ModelValidationError(f"no transition for state {q!r} reading {''.join(r)!r}")
    _LOGGER.info("Completing %d missing row(s) with stay-put self-loops", len(missing))
    stay = (0,) * m.tapes
    loops = tuple(NtmTransition(q, r, q, r, stay, 1) for q, r in missing)
    return Pntm(
        control_states=m.control_states,
        input_alphabet=m.input_alphabet,
        tape_alphabet=m.tape_alphabet,
        tapes=m.tapes,
        transitions=m.transitions + loops,
        epsilon=m.epsilon,
        initial=m.initial,
    )


# ----------------------------------------------------------------------
# Semantics
# ----------------------------------------------------------------------
def noise_distribution(
    state: PntmState, epsilon: Fraction, alphabet: Sequence[str]
) -> Distribution[tuple[str, ...]]:
    width = len(alphabet)
    marginals = []
    for tape in state.tapes:
        gap = state.time - tape.head_stamp
        if gap < 0:
            raise MalformedState(f"head cell stamped after the current time in {state}")
        keep = (1 - epsilon) ** gap
        spread = (1 - keep) / width
        marginal = []
        for symbol in alphabet:
            p = spread + (keep if symbol == tape.current else 0)
            if p:
                marginal.append((symbol, p))
        if tape.current not in alphabet:
            raise MalformedState(f"cell symbol {tape.current!r} outside the tape alphabet")
        marginals.append(marginal)

    pairs = []
    for combo in itertools.product(*marginals):
        probability = Fraction(1)
        for _, p in combo:
            probability *= p
        pairs.append((tuple(symbol for symbol, _ in combo), probability))
    return Distribution.merge_entries(pairs)


def apply_transition(state: PntmState, t: NtmTransition) -> PntmState:
    tapes = []
    for tape, symbol, move in zip(state.tapes, t.write, t.moves):
        cells = list(tape.cells)
        stamps = list(tape.stamps)
        offset = tape.head - tape.origin
        cells[offset] = symbol
        stamps[offset] = state.time
        head = tape.head + move
        origin = tape.origin
        if head < origin:
            cells.insert(0, BLANK)
            stamps.insert(0, 0)
            origin = head
        elif head >= origin + len(cells):
            cells.append(BLANK)
            stamps.append(0)
        tapes.append(TapeConfig(head, origin, tuple(cells), tuple(stamps)))
    return PntmState(t.dst, state.time + 1, tuple(tapes))


def pntm_step_distribution(m: Pntm, s: PntmState) -> Distribution[PntmState]:
    if len(s.tapes) != m.tapes:
        raise MalformedState(f"state {s} has {len(s.tapes)} tape(s), expected {m.tapes}")
    pairs = []
    for read, p in noise_distribution(s, m.epsilon, m.tape_alphabet):
        options = m.matching(s.control, read)
        if not options:
            raise MalformedState(f"no transition for {s.control!r} reading {''.join(read)!r}")
        total = sum(t.weight for t in options)
        pairs.extend((apply_transition(s, t), p * Fraction(t.weight, total)) for t in options)
    return Distribution.merge_entries(pairs)


# ----------------------------------------------------------------------
# Control graph
# ----------------------------------------------------------------------
def control_graph(m: Pntm) -> nx.DiGraph:
    graph = nx.DiGraph()
    graph.add_nodes_from(m.control_states)
    graph.add_edges_from((t.src, t.dst) for t in m.transitions)
    return graph


class GraphQueryKind(str, enum.Enum):
    EF = "EF"
    NOT_EF = "NOT-EF"
    UNTIL = "EU"
    AG_EF = "AG-EF"


@dataclass(frozen=True, slots=True)
class GraphQuery:
    kind: GraphQueryKind
    q: frozenset[str]
    avoid: frozenset[str] = frozenset()

    @classmethod
    def ef(cls, q: Iterable[str]) -> "GraphQuery":
        return cls(GraphQueryKind.EF, frozenset(q))

    @classmethod
    def not_ef(cls, q: Iterable[str]) -> "GraphQuery":
        return cls(GraphQueryKind.NOT_EF, frozenset(q))

    @classmethod
    def until(cls, avoid: Iterable[str], reach: Iterable[str]) -> "GraphQuery":
        """E(¬avoid U reach)."""

        return cls(GraphQueryKind.UNTIL, frozenset(reach), frozenset(avoid))

    @classmethod
    def ag_ef(cls, q: Iterable[str]) -> "GraphQuery":
        return cls(GraphQueryKind.AG_EF, frozenset(q))


def _backward(g: nx.DiGraph, sources: Iterable[str], blocked: frozenset[str] = frozenset()) -> set[str]:
    result = set(sources)
    stack = list(result)
    while stack:
        node = stack.pop()
        for pred in g.predecessors(node):
            if pred not in result and pred not in blocked:
                result.add(pred)
                stack.append(pred)
    return result


def graph_query(g: nx.DiGraph, query: GraphQuery) -> frozenset[str]:
    nodes = set(g.nodes)
    if not query.q <= nodes or not query.avoid <= nodes:
        raise MalformedState("graph query mentions unknown control states")
    if query.kind is GraphQueryKind.EF:
        return frozenset(_backward(g, query.q))
    if query.kind is GraphQueryKind.NOT_EF:
        return frozenset(nodes - _backward(g, query.q))
    if query.kind is GraphQueryKind.UNTIL:
        return frozenset(_backward(g, query.q, query.avoid))
    doomed = nodes - _backward(g, query.q)
    return frozenset(nodes - _backward(g, doomed))


# ----------------------------------------------------------------------
# Deciders and certificates
# ----------------------------------------------------------------------
def qual_decide(m: Pntm, init: Optional[PntmState], q: Iterable[str], query: QualQuery) -> TriBool:
    init = init or m.initial
    chosen = frozenset(q)
    g = control_graph(m)
    here = init.control
    if query.objective is Objective.REACH and query.side is Side.ZERO:
        return TriBool.of(here not in graph_query(g, GraphQuery.ef(chosen)))
    if query.objective is Objective.REPEAT and query.side is Side.ONE:
        return TriBool.of(here in graph_query(g, GraphQuery.ag_ef(chosen)))

    q_avoid = graph_query(g, GraphQuery.not_ef(chosen))
    if query.objective is Objective.REACH:
        return TriBool.of(here not in graph_query(g, GraphQuery.until(chosen, q_avoid)))
    q_avoid2 = graph_query(g, GraphQuery.not_ef(q_avoid))
    return TriBool.of(here not in graph_query(g, GraphQuery.ef(q_avoid2)))


def certificate(m: Pntm, target: str = "") -> DecisivenessCertificate:
    noise_floor = (m.epsilon / len(m.tape_alphabet)) ** m.tapes
    w_min = min((t.weight for t in m.transitions), default=1)
    w_max = max((sum(t.weight for t in ts) for ts in m._by_read.values()), default=1)
    return DecisivenessCertificate.globally_coarse(
        noise_floor * Fraction(w_min, w_max),
        len(m.control_states),
        target,
    )


class PntmChain:
    """Induced chain with oracles decided on the control graph."""

    def __init__(self, model: Pntm, q: Iterable[str], *, initial: Optional[PntmState] = None) -> None:
        self.model = model
        self.q = frozenset(q)
        self._initial = initial or model.initial
        g = control_graph(model)
        self.q_avoid = graph_query(g, GraphQuery.not_ef(self.q))
        self.q_avoid2 = graph_query(g, GraphQuery.not_ef(self.q_avoid))

    def initial(self) -> PntmState:
        return self._initial

    def successors(self, state: PntmState) -> Distribution[PntmState]:
        return pntm_step_distribution(self.model, state)

    def in_target(self, state: PntmState) -> bool:
        return state.control in self.q

    def in_avoid(self, state: PntmState) -> bool:
        return state.control in self.q_avoid

    def in_avoid2(self, state: PntmState) -> bool:
        return state.control in self.q_avoid2


def capped(state: PntmState, cap: int) -> PntmState:
    """Canonical form keeping only gaps, capped at ``cap``, relative to time ``cap``."""

    tapes = tuple(
        TapeConfig(
            tape.head,
            tape.origin,
            tape.cells,
            tuple(cap - min(state.time - s, cap) for s in tape.stamps),
        )
        for tape in state.tapes
    )
    return PntmState(state.control, cap, tapes)


class CappedPntmChain(PntmChain):
    """Oracle view of the chain with gaps capped at ``cap``.

    Exact for machines whose heads never move, where every gap that matters
    is one.
    """

    def __init__(
        self,
        model: Pntm,
        q: Iterable[str],
        *,
        cap: Optional[int] = None,
        initial: Optional[PntmState] = None,
    ) -> None:
        if cap is None:
            cap = get_settings().gap_cap
        self.cap = max(cap, 1)
        super().__init__(model, q, initial=initial)
        self._initial = capped(self._initial, self.cap)

    def successors(self, state: PntmState) -> Distribution[PntmState]:
        return pntm_step_distribution(self.model, state).map_states(lambda s: capped(s, self.cap))


__all__ = [
    "BLANK",
    "CappedPntmChain",
    "GraphQuery",
    "GraphQueryKind",
    "NtmTransition",
    "Pntm",
    "PntmChain",
    "PntmState",
    "TapeConfig",
    "apply_transition",
    "capped",
    "certificate",
    "control_graph",
    "ensure_total",
    "graph_query",
    "initial_state",
    "missing_rows",
    "noise_distribution",
    "pntm_step_distribution",
    "qual_decide",
]
