"""Ground-truth engines: finite truncation, exact absorption solves and Monte Carlo."""

from __future__ import annotations

import enum
import functools
import logging
import math
from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Callable, Hashable, Iterable, Optional

import networkx as nx
import numpy as np
import sympy

from app.core import Avoid2Unsupported, EffectiveChain, LimitExceeded, SingularSystem

_LOGGER = logging.getLogger(__name__)

OVERFLOW = "<overflow>"
CDF_CACHE_SIZE = 4_096


@dataclass(frozen=True, slots=True)
class FiniteChain:
    """Finite chain over indices ``0..n-1``; ``overflow`` (if any) is absorbing."""

    states: tuple[Any, ...]
    rows: tuple[dict[int, Fraction], ...]
    target: frozenset[int]
    avoid: frozenset[int]
    initial: int = 0
    overflow: Optional[int] = None
    avoid2: Optional[frozenset[int]] = None

    def __len__(self) -> int:
        return len(self.states)

    def index_of(self, state: Any) -> int:
        return self.states.index(state)

    def graph(self) -> nx.DiGraph:
        graph = nx.DiGraph()
        graph.add_nodes_from(range(len(self.states)))
        for i, row in enumerate(self.rows):
            graph.add_edges_from((i, j) for j, p in row.items() if p > 0)
        return graph

    def indices(self, states: Iterable[Any]) -> frozenset[int]:
        lookup = {s: i for i, s in enumerate(self.states)}
        return frozenset(lookup[s] for s in states if s in lookup)


def truncate(
    chain: EffectiveChain,
    in_bounds: Callable[[Any], bool] = lambda _: True,
    state_limit: int = 10_000,
) -> FiniteChain:
    """Enumerate in-bound states breadth first; mass leaving the bounds goes to an overflow sink."""

    init = chain.initial()
    if not in_bounds(init):
        raise LimitExceeded("initial state lies outside the bounds")

    index: dict[Hashable, int] = {init: 0}
    states: list[Any] = [init]
    rows: list[dict[int, Fraction]] = []
    overflow: Optional[int] = None
    queue = deque([init])

    while queue:
        state = queue.popleft()
        row: dict[int, Fraction] = {}
        for succ, p in chain.successors(state):
            if in_bounds(succ):
                j = index.get(succ)
                if j is None:
                    if len(states) >= state_limit:
                        raise LimitExceeded(f"more than {state_limit} in-bound states")
                    j = len(states)
                    index[succ] = j
                    states.append(succ)
                    queue.append(succ)
            else:
                if overflow is None:
                    overflow = -1
                j = overflow
            row[j] = row.get(j, Fraction(0)) + p
        rows.append(row)

    if overflow is not None:
        sink = len(states)
        states.append(OVERFLOW)
        rows = [{(sink if j == -1 else j): p for j, p in row.items()} for row in rows]
        rows.append({sink: Fraction(1)})
        overflow = sink

    real = range(len(rows) - (1 if overflow is not None else 0))
    target = frozenset(i for i in real if chain.in_target(states[i]))
    avoid = frozenset(i for i in real if chain.in_avoid(states[i]))
    try:
        avoid2: Optional[frozenset[int]] = frozenset(i for i in real if chain.in_avoid2(states[i]))
    except Avoid2Unsupported:
        avoid2 = None

    _LOGGER.info("Truncated chain has %d state(s)%s", len(states), " with overflow" if overflow is not None else "")
    return FiniteChain(tuple(states), tuple(rows), target, avoid, 0, overflow, avoid2)


def finite_chain_from_explicit(chain: EffectiveChain) -> FiniteChain:
    return truncate(chain)


# ----------------------------------------------------------------------
# Exact solves
# ----------------------------------------------------------------------
def _to_sympy(value: Fraction) -> sympy.Rational:
    return sympy.Rational(value.numerator, value.denominator)


def _from_sympy(value: Any) -> Fraction:
    if not isinstance(value, sympy.Rational):
        value = sympy.Rational(sympy.simplify(value))
    return Fraction(int(value.p), int(value.q))


def absorption_probability(fc: FiniteChain, goal: Iterable[int], start: Optional[int] = None) -> Fraction:
    """Probability of ever entering ``goal`` from ``start`` (goal states treated as absorbing)."""

    goal_set = frozenset(goal)
    start = fc.initial if start is None else start
    if start in goal_set:
        return Fraction(1)

    graph = nx.DiGraph()
    graph.add_nodes_from(range(len(fc)))
    for i, row in enumerate(fc.rows):
        if i in goal_set:
            continue
        graph.add_edges_from((i, j) for j, p in row.items() if p > 0)
    can_reach: set[int] = set()
    for g in goal_set:
        can_reach |= nx.ancestors(graph, g)
    unknowns = sorted(can_reach - goal_set)
    if start not in can_reach:
        return Fraction(0)

    position = {s: k for k, s in enumerate(unknowns)}
    size = len(unknowns)
    matrix = sympy.zeros(size, size)
    rhs = sympy.zeros(size, 1)
    for k, s in enumerate(unknowns):
        matrix[k, k] = sympy.Integer(1)
        for j, p in fc.rows[s].items():
            if j in goal_set:
                rhs[k, 0] += _to_sympy(p)
            elif j in position:
                matrix[k, position[j]] -= _to_sympy(p)
    try:
        solution = matrix.LUsolve(rhs)
    except (ValueError, ZeroDivisionError) as exc:
        raise SingularSystem(f"absorption system over {size} state(s) is singular") from exc
    return _from_sympy(solution[position[start], 0])


def exact_reach_prob(fc: FiniteChain, target: Optional[Iterable[int]] = None) -> tuple[Fraction, Fraction]:
    """``(lower, upper)`` for P(◇F); the overflow sink counts against ``lower`` and for ``upper``."""

    goal = fc.target if target is None else frozenset(target)
    lower = absorption_probability(fc, goal)
    if fc.overflow is None:
        return lower, lower
    upper = absorption_probability(fc, goal | {fc.overflow})
    return lower, upper


def bottom_components(fc: FiniteChain) -> list[frozenset[int]]:
    graph = fc.graph()
    condensed = nx.condensation(graph)
    members = nx.get_node_attributes(condensed, "members")
    return [frozenset(members[c]) for c in condensed.nodes if condensed.out_degree(c) == 0]


def exact_repeat_reach_prob(
    fc: FiniteChain, target: Optional[Iterable[int]] = None
) -> tuple[Fraction, Fraction]:
    """``(lower, upper)`` for P(□◇F) via bottom strongly connected components."""

    goal = fc.target if target is None else frozenset(target)
    good: set[int] = set()
    for component in bottom_components(fc):
        if fc.overflow is not None and fc.overflow in component:
            continue
        if component & goal:
            good |= component
    lower = absorption_probability(fc, good) if good else Fraction(0)
    if fc.overflow is None:
        return lower, lower
    upper = absorption_probability(fc, good | {fc.overflow})
    return lower, upper


# ----------------------------------------------------------------------
# Reference path enumeration
# ----------------------------------------------------------------------
def queue_trace(chain: EffectiveChain, depth: int, *, repeat: bool = False) -> list[tuple[Fraction, Fraction]]:
    """Per-path FIFO enumeration without merging; ``(yes_j, no_j)`` for ``j = 0..depth``."""

    accept = chain.in_avoid2 if repeat else chain.in_target
    reject = chain.in_avoid
    yes = Fraction(0)
    no = Fraction(0)
    queue: deque[tuple[Any, Fraction, int]] = deque([(chain.initial(), Fraction(1), 0)])
    trace: list[tuple[Fraction, Fraction]] = []
    level = 0
    while level <= depth:
        while queue and queue[0][2] == level:
            state, mass, _ = queue.popleft()
            if accept(state):
                yes += mass
            elif reject(state):
                no += mass
            elif level < depth:
                for succ, p in chain.successors(state):
                    queue.append((succ, mass * p, level + 1))
        trace.append((yes, no))
        level += 1
    return trace


# ----------------------------------------------------------------------
# Monte Carlo
# ----------------------------------------------------------------------
class Event(str, enum.Enum):
    REACH = "reach"
    BOUNDED_REACH = "bounded-reach"


@dataclass(frozen=True, slots=True)
class MonteCarloEstimate:
    successes: int
    runs: int
    estimate: float
    low: float
    high: float
    generator: str = "PCG64"

    def contains(self, value: float) -> bool:
        return self.low <= value <= self.high


def wilson_interval(successes: int, n: int, z: float = 1.96) -> tuple[float, float]:
    if n <= 0:
        raise ValueError("n must be positive")
    phat = successes / n
    denom = 1 + z * z / n
    centre = (phat + z * z / (2 * n)) / denom
    half = z * math.sqrt(phat * (1 - phat) / n + z * z / (4 * n * n)) / denom
    low = 0.0 if successes == 0 else max(0.0, centre - half)
    high = 1.0 if successes == n else min(1.0, centre + half)
    return low, high


def cdf_tables(
    chain: EffectiveChain, maxsize: int = CDF_CACHE_SIZE
) -> Callable[[Any], tuple[list[Any], np.ndarray]]:
    """Successor lists with cumulative weights, memoised per state in a bounded LRU."""

    @functools.lru_cache(maxsize=maxsize)
    def table(state: Any) -> tuple[list[Any], np.ndarray]:
        dist = chain.successors(state)
        return list(dist.support()), np.cumsum([float(p) for _, p in dist])

    return table


def monte_carlo(
    chain: EffectiveChain,
    event: Event | str = Event.REACH,
    n: int = 10_000,
    horizon: int = 1_000,
    seed: int = 0,
    *,
    cache_size: int = CDF_CACHE_SIZE,
) -> MonteCarloEstimate:
    """Estimate the probability of reaching F within ``horizon`` steps.

    Each run draws from its own PCG64 stream spawned from
    ``SeedSequence(seed)``, so results depend only on ``(seed, n, horizon)``.
    For :attr:`Event.REACH` a run stops early once it enters unreachable(F).
    """

    if n < 1:
        raise ValueError("n must be at least 1")
    event = Event(event)
    streams = np.random.SeedSequence(seed).spawn(n)
    tables = cdf_tables(chain, cache_size)
    successes = 0
    for stream in streams:
        rng = np.random.Generator(np.random.PCG64(stream))
        state = chain.initial()
        for _ in range(horizon + 1):
            if chain.in_target(state):
                successes += 1
                break
            if event is Event.REACH and chain.in_avoid(state):
                break
            succs, cdf = tables(state)
            pick = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
            state = succs[min(pick, len(succs) - 1)]
    low, high = wilson_interval(successes, n)
    return MonteCarloEstimate(successes, n, successes / n, low, high)


__all__ = [
    "CDF_CACHE_SIZE",
    "Event",
    "FiniteChain",
    "MonteCarloEstimate",
    "OVERFLOW",
    "absorption_probability",
    "bottom_components",
    "cdf_tables",
    "exact_reach_prob",
    "exact_repeat_reach_prob",
    "finite_chain_from_explicit",
    "monte_carlo",
    "queue_trace",
    "truncate",
    "wilson_interval",
]
