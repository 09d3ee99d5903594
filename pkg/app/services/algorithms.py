"""Approximate (repeated) reachability by breadth-first path-mass enumeration.

Probability mass is pushed from the initial state depth by depth.  Mass
arriving in the "yes" set or the "no" set is settled; the run stops once
the settled mass is within ``eps`` of one.  Identical states at the same
depth are merged, which leaves the per-depth yes/no sums unchanged.
"""

from __future__ import annotations

import logging
from fractions import Fraction
from typing import Any, Callable, Hashable, Optional, Union

from app.config import get_settings
from app.core import (
    Approx,
    BudgetExhausted,
    EffectiveChain,
    InvalidEpsilon,
    QueryResult,
    as_rational,
)

_LOGGER = logging.getLogger(__name__)

TraceCallback = Callable[[int, Fraction, Fraction, Fraction], None]


def _enumerate(
    chain: EffectiveChain,
    eps: Union[Fraction, str, int],
    budget: Optional[int],
    accept: Callable[[Any], bool],
    reject: Callable[[Any], bool],
    trace: Optional[TraceCallback],
) -> QueryResult:
    try:
        eps = as_rational(eps)
    except ValueError as exc:
        raise InvalidEpsilon(str(exc)) from exc
    if eps <= 0:
        raise InvalidEpsilon(f"eps must be positive, got {eps}")
    if budget is None:
        budget = get_settings().default_budget
    if budget < 0:
        raise ValueError("budget must be non-negative")

    threshold = 1 - eps
    yes = Fraction(0)
    no = Fraction(0)
    expansions = 0
    depth = 0
    frontier: dict[Hashable, Fraction] = {chain.initial(): Fraction(1)}

    while True:
        pending: list[tuple[Hashable, Fraction]] = []
        for state, mass in frontier.items():
            if accept(state):
                yes += mass
            elif reject(state):
                no += mass
            else:
                pending.append((state, mass))

        if trace is not None:
            trace(depth, yes, no, sum((m for _, m in pending), Fraction(0)))
        if yes + no >= threshold:
            _LOGGER.info("Enumeration settled at depth %d after %d expansion(s)", depth, expansions)
            return Approx(theta=yes, eps=eps, depth=depth, yes=yes, no=no, expansions=expansions)

        successors: dict[Hashable, Fraction] = {}
        for state, mass in pending:
            if expansions >= budget:
                _LOGGER.warning(
                    "Expansion budget %d exhausted at depth %d (yes=%s, no=%s)", budget, depth, yes, no
                )
                return BudgetExhausted(yes=yes, no=no, expansions=expansions, depth=depth)
            expansions += 1
            for succ, p in chain.successors(state):
                successors[succ] = successors.get(succ, Fraction(0)) + mass * p
        frontier = successors
        depth += 1


def approx_reach(
    chain: EffectiveChain,
    eps: Union[Fraction, str, int],
    budget: Optional[int] = None,
    *,
    trace: Optional[TraceCallback] = None,
) -> QueryResult:
    """Bracket P(◇F): ``theta <= P <= theta + eps`` on success.

    Returns :class:`BudgetExhausted` when the expansion budget runs out; its
    ``yes`` is still a lower bound and ``1 - no`` an upper bound.
    """

    return _enumerate(chain, eps, budget, chain.in_target, chain.in_avoid, trace)


def approx_repeat_reach(
    chain: EffectiveChain,
    eps: Union[Fraction, str, int],
    budget: Optional[int] = None,
    *,
    trace: Optional[TraceCallback] = None,
) -> QueryResult:
    """Bracket P(□◇F); mass settles as yes in unreachable(unreachable(F)) and as no in unreachable(F).

    Raises :class:`~app.core.Avoid2Unsupported` when the chain cannot
    decide the first of those sets.
    """

    chain.in_avoid2(chain.initial())
    return _enumerate(chain, eps, budget, chain.in_avoid2, chain.in_avoid, trace)


__all__ = ["TraceCallback", "approx_reach", "approx_repeat_reach"]
