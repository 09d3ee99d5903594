"""Probabilistic vector addition systems with states."""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Iterable, Iterator, Optional, Sequence

import networkx as nx
from pydantic import BaseModel, ConfigDict, PrivateAttr, field_validator, model_validator

from app.config import get_settings
from app.core import (
    Avoid2Unsupported,
    DecisivenessCertificate,
    Distribution,
    MalformedState,
    ModelValidationError,
    NotQStateTarget,
    Objective,
    QualQuery,
    ResourceExhausted,
    Side,
    TriBool,
)
from app.wqo import MARKING_ORDER, Antichain, SaturationResult, UpwardTarget, saturate_pre

_LOGGER = logging.getLogger(__name__)

OMEGA = math.inf

REPEAT_ZERO_OPEN = (
    "almost-sure avoidance of repeated reachability is not known to be decidable "
    "for probabilistic VASS, which need not be decisive w.r.t. unreachable(F)"
)


@dataclass(frozen=True, slots=True, order=True)
class Marking:
    control: str
    valuation: tuple[int, ...]

    @property
    def payload(self) -> tuple[int, ...]:
        return self.valuation

    def __str__(self) -> str:
        parts = ["ω" if v == OMEGA else str(v) for v in self.valuation]
        return f"({', '.join([self.control, *parts])})"


@dataclass(frozen=True, slots=True)
class VassTransition:
    src: str
    op: tuple[int, ...]
    dst: str
    weight: int = 1

    @property
    def always_enabled(self) -> bool:
        return all(d >= 0 for d in self.op)

    def enabled(self, valuation: Sequence[int]) -> bool:
        return all(v + d >= 0 for v, d in zip(valuation, self.op))

    def fire(self, valuation: Sequence[int]) -> tuple[int, ...]:
        return tuple(v + d for v, d in zip(valuation, self.op))


class Pvass(BaseModel):
    """Static structure of a probabilistic VASS."""

    model_config = ConfigDict(frozen=True)

    control_states: tuple[str, ...]
    vars: tuple[str, ...]
    transitions: tuple[VassTransition, ...]
    initial: Marking

    _outgoing: dict[str, tuple[VassTransition, ...]] = PrivateAttr(default_factory=dict)
    _incoming: dict[str, tuple[VassTransition, ...]] = PrivateAttr(default_factory=dict)

    @field_validator("control_states", "vars")
    @classmethod
    def _names_unique(cls, value: tuple[str, ...]) -> tuple[str, ...]:
        if len(set(value)) != len(value):
            raise ValueError("names must be unique")
        return value

    @model_validator(mode="after")
    def _check_structure(self) -> "Pvass":
        states = set(self.control_states)
        if not states:
            raise ValueError("at least one control state is required")
        width = len(self.vars)
        for t in self.transitions:
            if t.src not in states or t.dst not in states:
                raise ValueError(f"transition {t.src} -> {t.dst} uses an undeclared control state")
            if len(t.op) != width:
                raise ValueError(f"transition {t.src} -> {t.dst} has {len(t.op)} updates for {width} variable(s)")
            if any(d not in (-1, 0, 1) for d in t.op):
                raise ValueError(f"transition {t.src} -> {t.dst} updates must be -1, 0 or +1")
            if t.weight <= 0:
                raise ValueError(f"transition {t.src} -> {t.dst} weight must be positive")
        if self.initial.control not in states:
            raise ValueError(f"initial control state {self.initial.control!r} is undeclared")
        if len(self.initial.valuation) != width or any(v < 0 for v in self.initial.valuation):
            raise ValueError("initial valuation must give a natural number to every variable")
        return self

    def model_post_init(self, __context: Any) -> None:
        outgoing: dict[str, list[VassTransition]] = {q: [] for q in self.control_states}
        incoming: dict[str, list[VassTransition]] = {q: [] for q in self.control_states}
        for t in self.transitions:
            outgoing[t.src].append(t)
            incoming[t.dst].append(t)
        self._outgoing = {q: tuple(ts) for q, ts in outgoing.items()}
        self._incoming = {q: tuple(ts) for q, ts in incoming.items()}

    def outgoing(self, control: str) -> tuple[VassTransition, ...]:
        return self._outgoing.get(control, ())

    def incoming(self, control: str) -> tuple[VassTransition, ...]:
        return self._incoming.get(control, ())

    def zero(self, control: str) -> Marking:
        return Marking(control, (0,) * len(self.vars))

    def marking(self, control: str, **values: int) -> Marking:
        unknown = set(values) - set(self.vars)
        if unknown:
            raise MalformedState(f"unknown variable(s): {', '.join(sorted(unknown))}")
        return Marking(control, tuple(values.get(x, 0) for x in self.vars))


# ----------------------------------------------------------------------
# Validation and targets
# ----------------------------------------------------------------------
def ensure_deadlock_free(m: Pvass, *, auto_selfloop: bool = False) -> Pvass:
    """Reject (or repair with nop self-loops) states lacking an always-enabled transition."""

    stuck = [q for q in m.control_states if not any(t.always_enabled for t in m.outgoing(q))]
    if not stuck:
        return m
    if not auto_selfloop:
        raise ModelValidationError(
            f"control state {stuck[0]!r} has no always-enabled transition (deadlock possible)"
        )
    _LOGGER.info("Adding nop self-loops to %d control state(s)", len(stuck))
    zero = (0,) * len(m.vars)
    loops = tuple(VassTransition(q, zero, q, 1) for q in stuck)
    return Pvass(
        control_states=m.control_states,
        vars=m.vars,
        transitions=m.transitions + loops,
        initial=m.initial,
    )


validate = ensure_deadlock_free


def q_target(m: Pvass, q_states: Iterable[str]) -> UpwardTarget[Marking]:
    """Upward target of all markings whose control state lies in ``q_states``."""

    chosen = frozenset(q_states)
    unknown = chosen - set(m.control_states)
    if unknown:
        raise MalformedState(f"unknown control state(s): {', '.join(sorted(unknown))}")
    basis = Antichain.of(MARKING_ORDER, (m.zero(q) for q in sorted(chosen)))
    return UpwardTarget(basis, chosen)


def up_target(markings: Iterable[Marking]) -> UpwardTarget[Marking]:
    basis = Antichain.of(MARKING_ORDER, markings)
    controls = {e.control for e in basis}
    if basis.elements and all(not any(e.valuation) for e in basis):
        return UpwardTarget(basis, frozenset(controls))
    return UpwardTarget(basis)


# ----------------------------------------------------------------------
# Semantics
# ----------------------------------------------------------------------
def _check_marking(m: Pvass, s: Marking) -> None:
    if s.control not in m._outgoing:
        raise MalformedState(f"unknown control state {s.control!r}")
    if len(s.valuation) != len(m.vars) or any(v < 0 for v in s.valuation):
        raise MalformedState(f"marking {s} does not fit variables {m.vars}")


def pvass_successors(m: Pvass, s: Marking) -> Distribution[Marking]:
    _check_marking(m, s)
    enabled = [t for t in m.outgoing(s.control) if t.enabled(s.valuation)]
    if not enabled:
        raise MalformedState(f"no transition enabled at {s}")
    return Distribution.from_weights((Marking(t.dst, t.fire(s.valuation)), t.weight) for t in enabled)


def _enabled_successors(m: Pvass, s: Marking) -> Iterator[tuple[VassTransition, Marking]]:
    for t in m.outgoing(s.control):
        if t.enabled(s.valuation):
            yield t, Marking(t.dst, t.fire(s.valuation))


def control_graph(m: Pvass) -> nx.DiGraph:
    graph = nx.DiGraph()
    graph.add_nodes_from(m.control_states)
    graph.add_edges_from((t.src, t.dst) for t in m.transitions)
    return graph


def control_reachable(m: Pvass, init: Optional[Marking] = None) -> frozenset[str]:
    """Control states reachable in the control graph (an over-approximation)."""

    start = (init or m.initial).control
    return frozenset(nx.descendants(control_graph(m), start) | {start})


# ----------------------------------------------------------------------
# Backward coverability
# ----------------------------------------------------------------------
def min_pre_transition(m: Pvass, t: VassTransition, target_min: Marking) -> Optional[Marking]:
    """Least marking whose ``t``-successor covers ``target_min``, if ``t`` leads there."""

    if t.dst != target_min.control:
        return None
    return Marking(
        t.src,
        tuple(max(v - d, max(0, -d)) for v, d in zip(target_min.valuation, t.op)),
    )


def pre_star_upward(
    m: Pvass, target: UpwardTarget[Marking], *, limit: Optional[int] = None
) -> SaturationResult[Marking]:
    def step(element: Marking) -> Iterator[Marking]:
        for t in m.incoming(element.control):
            pre = min_pre_transition(m, t, element)
            if pre is not None:
                yield pre

    return saturate_pre(target.basis, step, limit=limit)


# ----------------------------------------------------------------------
# Forward analysis
# ----------------------------------------------------------------------
@dataclass(frozen=True, slots=True)
class Witness:
    path: tuple[Marking, ...]

    def __len__(self) -> int:
        return max(len(self.path) - 1, 0)


@dataclass(frozen=True, slots=True)
class EmptinessCertificate:
    kind: str
    detail: str
    explored: int = 0


@dataclass(frozen=True, slots=True)
class KmNode:
    marking: Marking
    parent: Optional[int]


@dataclass(frozen=True, slots=True)
class CoverabilityTree:
    nodes: tuple[KmNode, ...]
    complete: bool
    has_omega: bool

    def control_states(self) -> frozenset[str]:
        return frozenset(n.marking.control for n in self.nodes)

    def path_to(self, index: int) -> tuple[Marking, ...]:
        path: list[Marking] = []
        cursor: Optional[int] = index
        while cursor is not None:
            node = self.nodes[cursor]
            path.append(node.marking)
            cursor = node.parent
        return tuple(reversed(path))


def karp_miller(m: Pvass, init: Optional[Marking] = None, node_limit: Optional[int] = None) -> CoverabilityTree:
    """Build the Karp-Miller coverability tree with ω-acceleration."""

    limit = node_limit or get_settings().km_node_limit
    root = init or m.initial
    nodes: list[KmNode] = [KmNode(root, None)]
    stack = [0]
    has_omega = False
    complete = True

    while stack and complete:
        index = stack.pop()
        node = nodes[index]
        if _repeats_ancestor(nodes, node):
            continue
        for t in m.outgoing(node.marking.control):
            if not t.enabled(node.marking.valuation):
                continue
            values = list(t.fire(node.marking.valuation))
            cursor: Optional[int] = index
            while cursor is not None:
                ancestor = nodes[cursor].marking
                if (
                    ancestor.control == t.dst
                    and all(a <= v for a, v in zip(ancestor.valuation, values))
                    and tuple(values) != ancestor.valuation
                ):
                    for i, (a, v) in enumerate(zip(ancestor.valuation, values)):
                        if a < v:
                            values[i] = OMEGA
                cursor = nodes[cursor].parent
            if OMEGA in values:
                has_omega = True
            if len(nodes) >= limit:
                complete = False
                break
            nodes.append(KmNode(Marking(t.dst, tuple(values)), index))
            stack.append(len(nodes) - 1)

    if not complete:
        _LOGGER.warning("Coverability tree stopped at the %d node limit", limit)
    return CoverabilityTree(tuple(nodes), complete, has_omega)


def _repeats_ancestor(nodes: Sequence[KmNode], node: KmNode) -> bool:
    cursor = node.parent
    while cursor is not None:
        if nodes[cursor].marking == node.marking:
            return True
        cursor = nodes[cursor].parent
    return False


def _forward_search(
    m: Pvass, init: Marking, in_set, limit: int
) -> tuple[Optional[tuple[Marking, ...]], bool, int]:
    """Breadth-first search for a marking satisfying ``in_set``.

    Returns the witness path (if any), whether the whole reachable set was
    enumerated, and the number of markings visited.
    """

    parents: dict[Marking, Optional[Marking]] = {init: None}
    queue = deque([init])
    while queue:
        current = queue.popleft()
        for _, succ in _enabled_successors(m, current):
            if succ in parents:
                continue
            parents[succ] = current
            if in_set(succ):
                path = [succ]
                cursor = current
                while cursor is not None:
                    path.append(cursor)
                    cursor = parents[cursor]
                return tuple(reversed(path)), False, len(parents)
            if len(parents) >= limit:
                return None, False, len(parents)
            queue.append(succ)
    return None, True, len(parents)


def best_effort_reach_downward(
    m: Pvass,
    init: Marking,
    avoid_basis: Antichain[Marking],
    *,
    witness_limit: Optional[int] = None,
    node_limit: Optional[int] = None,
) -> TriBool:
    """Can ``init`` reach the downward-closed set ``D = S \\ ↑avoid_basis``?

    Holds answers carry a :class:`Witness`; Fails answers carry an
    :class:`EmptinessCertificate`.  Anything else is Unknown.
    """

    settings = get_settings()
    index = avoid_basis.index()

    def in_downward(s: Marking) -> bool:
        return not index.covers(s)

    if in_downward(init):
        return TriBool.holds(Witness((init,)), "initial marking lies in the set")

    bottoms = {q for q in m.control_states if in_downward(m.zero(q))}
    if not bottoms:
        return TriBool.fails(
            EmptinessCertificate("karp-miller", "the downward-closed set is empty"),
            "target set is empty",
        )

    path, exhausted, explored = _forward_search(m, init, in_downward, witness_limit or settings.witness_limit)
    if path is not None:
        return TriBool.holds(Witness(path), f"witness found after visiting {explored} marking(s)")
    if exhausted:
        return TriBool.fails(
            EmptinessCertificate("bounded-exhaustive", "reachable set fully enumerated", explored),
            f"all {explored} reachable marking(s) avoid the set",
        )

    tree = karp_miller(m, init, node_limit)
    if tree.complete:
        seen = tree.control_states()
        if not seen & bottoms:
            return TriBool.fails(
                EmptinessCertificate(
                    "karp-miller",
                    "no control state of the set's bottoms appears in the coverability tree",
                    len(tree.nodes),
                ),
                "control states of the set are not coverable",
            )
        if not tree.has_omega:
            for i, node in enumerate(tree.nodes):
                if in_downward(node.marking):
                    return TriBool.holds(Witness(tree.path_to(i)), "witness found in the coverability tree")
            return TriBool.fails(
                EmptinessCertificate("bounded-exhaustive", "coverability tree has no ω", len(tree.nodes)),
                "reachable set is finite and avoids the set",
            )

    _LOGGER.info("Downward reachability from %s left undecided", init)
    return TriBool.unknown(
        f"no witness within {explored} marking(s) and no emptiness certificate "
        f"(coverability tree {'complete' if tree.complete else 'truncated'})"
    )


# ----------------------------------------------------------------------
# Deciders and certificates
# ----------------------------------------------------------------------
def cut_q_states(m: Pvass, q_states: Iterable[str]) -> Pvass:
    """Remove the outgoing transitions of ``q_states`` and make them absorbing."""

    chosen = frozenset(q_states)
    zero = (0,) * len(m.vars)
    kept = tuple(t for t in m.transitions if t.src not in chosen)
    loops = tuple(VassTransition(q, zero, q, 1) for q in m.control_states if q in chosen)
    return Pvass(control_states=m.control_states, vars=m.vars, transitions=kept + loops, initial=m.initial)


def _require_q_states(target: UpwardTarget[Marking]) -> frozenset[str]:
    if target.q_states is not None:
        return target.q_states
    if target.basis.elements and all(not any(e.valuation) for e in target.basis):
        return frozenset(e.control for e in target.basis)
    raise NotQStateTarget("almost-sure reachability is only decided for Q-state targets")


def qual_decide(
    m: Pvass,
    init: Optional[Marking],
    target: UpwardTarget[Marking],
    query: QualQuery,
) -> TriBool:
    init = init or m.initial
    if query.objective is Objective.REACH and query.side is Side.ZERO:
        coverable = pre_star_upward(m, target).basis.covers(init)
        return TriBool.of(
            not coverable,
            reason="F is coverable from the initial marking" if coverable else "initial marking outside Pre*(F)",
        )

    if query.objective is Objective.REACH:
        q_states = _require_q_states(target)
        modified = cut_q_states(m, q_states)
        try:
            pre = pre_star_upward(modified, target)
        except ResourceExhausted as exc:
            return TriBool.unknown(str(exc))
        return best_effort_reach_downward(modified, init, pre.basis).negate()

    if query.side is Side.ONE:
        try:
            pre = pre_star_upward(m, target)
        except ResourceExhausted as exc:
            return TriBool.unknown(str(exc))
        return best_effort_reach_downward(m, init, pre.basis).negate()

    _LOGGER.info("repeat-zero on a PVASS is reported as unknown")
    return TriBool.unknown(REPEAT_ZERO_OPEN)


def coarseness(m: Pvass) -> Fraction:
    """Lower bound on every one-step probability: min weight over total weight per state."""

    beta = Fraction(1)
    for q in m.control_states:
        weights = [t.weight for t in m.outgoing(q)]
        if weights:
            beta = min(beta, Fraction(min(weights), sum(weights)))
    return beta


def decisiveness_certificate(m: Pvass, target: UpwardTarget[Marking]) -> DecisivenessCertificate:
    span = pre_star_upward(m, target).rounds
    return DecisivenessCertificate.globally_coarse(coarseness(m), span, target.describe())


class PvassChain:
    """Markov chain induced by a PVASS with an upward-closed target."""

    def __init__(
        self,
        model: Pvass,
        target: UpwardTarget[Marking],
        *,
        initial: Optional[Marking] = None,
        limit: Optional[int] = None,
    ) -> None:
        self.model = model
        self.target = target
        self._initial = initial or model.initial
        self._target_index = target.basis.index()
        self.pre_star = pre_star_upward(model, target, limit=limit)
        self._pre_index = self.pre_star.basis.index()

    def initial(self) -> Marking:
        return self._initial

    def successors(self, state: Marking) -> Distribution[Marking]:
        return pvass_successors(self.model, state)

    def in_target(self, state: Marking) -> bool:
        return self._target_index.covers(state)

    def in_avoid(self, state: Marking) -> bool:
        return not self._pre_index.covers(state)

    def in_avoid2(self, state: Marking) -> bool:
        raise Avoid2Unsupported(
            "membership in unreachable(unreachable(F)) is not available for PVASS targets"
        )


__all__ = [
    "CoverabilityTree",
    "EmptinessCertificate",
    "KmNode",
    "Marking",
    "OMEGA",
    "Pvass",
    "PvassChain",
    "VassTransition",
    "Witness",
    "best_effort_reach_downward",
    "coarseness",
    "control_graph",
    "control_reachable",
    "cut_q_states",
    "decisiveness_certificate",
    "ensure_deadlock_free",
    "karp_miller",
    "min_pre_transition",
    "pre_star_upward",
    "pvass_successors",
    "q_target",
    "qual_decide",
    "up_target",
    "validate",
]
