"""Hand-coded chains: explicit finite chains and the gambler's walk."""

from __future__ import annotations

from fractions import Fraction
from typing import Hashable, Iterable, Mapping, Optional

import networkx as nx

from app.core import Distribution, MalformedState, as_rational


class ExplicitChain:
    """A chain given by its rows ``{state: {successor: probability}}``.

    The unreachable sets are computed on the transition graph, so the
    oracles are exact for every finite row set.
    """

    def __init__(
        self,
        rows: Mapping[Hashable, Mapping[Hashable, Fraction]],
        initial: Hashable,
        target: Iterable[Hashable],
    ) -> None:
        self.rows = {s: dict(succ) for s, succ in rows.items()}
        self._initial = initial
        self.target = frozenset(target)
        self.graph = nx.DiGraph()
        self.graph.add_nodes_from(self.rows)
        for s, succ in self.rows.items():
            self.graph.add_edges_from((s, t) for t, p in succ.items() if p > 0)
        self.avoid = unreachable(self.graph, self.target)
        self.avoid2 = unreachable(self.graph, self.avoid)

    def initial(self) -> Hashable:
        return self._initial

    def successors(self, state: Hashable) -> Distribution:
        row = self.rows.get(state)
        if row is None:
            raise MalformedState(f"unknown state {state!r}")
        return Distribution.merge_entries(row.items())

    def in_target(self, state: Hashable) -> bool:
        return state in self.target

    def in_avoid(self, state: Hashable) -> bool:
        return state in self.avoid

    def in_avoid2(self, state: Hashable) -> bool:
        return state in self.avoid2


def unreachable(graph: nx.DiGraph, goal: Iterable[Hashable]) -> frozenset:
    """States of ``graph`` with no path into ``goal``."""

    reach = set(g for g in goal if g in graph)
    for node in list(reach):
        reach |= nx.ancestors(graph, node)
    return frozenset(set(graph.nodes) - reach)


class GamblerChain:
    """States ℕ; up with probability ``x``, down with ``1-x``; 0 is absorbing and the target."""

    def __init__(self, x: Fraction | str, start: int = 1) -> None:
        self.x = as_rational(x)
        if not 0 < self.x < 1:
            raise ValueError("x must lie strictly between 0 and 1")
        self.start = start

    def initial(self) -> int:
        return self.start

    def successors(self, state: int) -> Distribution[int]:
        if state < 0:
            raise MalformedState(f"negative gambler state {state}")
        if state == 0:
            return Distribution.point_mass(0)
        return Distribution(((state + 1, self.x), (state - 1, 1 - self.x)))

    def in_target(self, state: int) -> bool:
        return state == 0

    def in_avoid(self, state: int) -> bool:
        return False

    def in_avoid2(self, state: int) -> bool:
        # unreachable(F) is empty, so every state is in unreachable(unreachable(F)) by definition;
        # for x > 1/2 the chain is not decisive and repeat answers are not P(□◇F)
        return True

    @staticmethod
    def closed_form(x: Fraction) -> Fraction:
        """Probability of ever hitting 0 from 1: ``min(1, (1-x)/x)``."""

        return min(Fraction(1), (1 - x) / x)


def random_finite_chain(rng, size: int, *, max_out: int = 3, target_share: float = 0.2) -> ExplicitChain:
    """Random chain over ``0..size-1`` with small rational rows (used by property tests)."""

    rows: dict[int, dict[int, Fraction]] = {}
    for s in range(size):
        k = rng.randint(1, min(max_out, size))
        succ = rng.sample(range(size), k)
        weights = [rng.randint(1, 4) for _ in succ]
        total = sum(weights)
        rows[s] = {t: Fraction(w, total) for t, w in zip(succ, weights)}
    target = [s for s in range(size) if rng.random() < target_share]
    return ExplicitChain(rows, 0, target)


__all__ = ["ExplicitChain", "GamblerChain", "random_finite_chain", "unreachable"]
