"""Well-quasi-orders, antichain bases of upward-closed sets and Pre* saturation."""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from typing import Any, Callable, Generic, Hashable, Iterable, Iterator, Optional, Protocol, Sequence, TypeVar

from app.config import get_settings
from app.core import CarrierMismatch, ResourceExhausted

_LOGGER = logging.getLogger(__name__)

T = TypeVar("T", bound=Hashable)


class OrderKind(str, enum.Enum):
    VECTOR = "vector-order"
    SUBWORD = "subword-order"
    PRODUCT = "product-order"


class Wqo(Protocol[T]):
    kind: OrderKind

    def leq(self, a: T, b: T) -> bool: ...

    def bucket(self, a: T) -> Hashable: ...


def vector_leq(a: Sequence[int], b: Sequence[int]) -> bool:
    if len(a) != len(b):
        raise CarrierMismatch(f"vectors of length {len(a)} and {len(b)} are not comparable")
    return all(x <= y for x, y in zip(a, b))


def subword_leq(u: Sequence[Any], v: Sequence[Any]) -> bool:
    """True iff ``u`` embeds into ``v`` as a (scattered) subsequence."""

    if len(u) > len(v):
        return False
    remaining = iter(v)
    return all(symbol in remaining for symbol in u)


class VectorOrder:
    kind = OrderKind.VECTOR

    def leq(self, a: Sequence[int], b: Sequence[int]) -> bool:
        return vector_leq(a, b)

    def bucket(self, a: Any) -> Hashable:
        return None


class SubwordOrder:
    kind = OrderKind.SUBWORD

    def leq(self, u: Sequence[Any], v: Sequence[Any]) -> bool:
        return subword_leq(u, v)

    def bucket(self, a: Any) -> Hashable:
        return None


class ChannelwiseOrder:
    """Componentwise product of an inner order over equally long tuples."""

    kind = OrderKind.PRODUCT

    def __init__(self, inner: Wqo) -> None:
        self.inner = inner

    def leq(self, a: Sequence[Any], b: Sequence[Any]) -> bool:
        if len(a) != len(b):
            raise CarrierMismatch(f"tuples of length {len(a)} and {len(b)} are not comparable")
        return all(self.inner.leq(x, y) for x, y in zip(a, b))

    def bucket(self, a: Any) -> Hashable:
        return None


class ProductOrder:
    """Control-state equality times an order on the ``payload`` component."""

    kind = OrderKind.PRODUCT

    def __init__(self, payload_order: Wqo) -> None:
        self.payload_order = payload_order

    def leq(self, a: Any, b: Any) -> bool:
        try:
            if a.control != b.control:
                return False
            return self.payload_order.leq(a.payload, b.payload)
        except AttributeError as exc:
            raise CarrierMismatch("product order needs elements with control and payload") from exc

    def bucket(self, a: Any) -> Hashable:
        return a.control


VECTOR_ORDER = VectorOrder()
SUBWORD_ORDER = SubwordOrder()
MARKING_ORDER = ProductOrder(VECTOR_ORDER)
CONFIG_ORDER = ProductOrder(ChannelwiseOrder(SUBWORD_ORDER))


def wqo_leq(kind: OrderKind | str, a: Any, b: Any) -> bool:
    """Compare ``a`` and ``b`` under the named order.

    Product-order elements carry ``control`` and ``payload``; the payload is
    compared as a vector when it holds integers and channelwise by subword
    otherwise.
    """

    kind = OrderKind(kind)
    if kind is OrderKind.VECTOR:
        return vector_leq(a, b)
    if kind is OrderKind.SUBWORD:
        if isinstance(a, str) != isinstance(b, str):
            raise CarrierMismatch("cannot compare a word with a non-word")
        return subword_leq(a, b)
    payload = getattr(a, "payload", None)
    if payload is None or getattr(b, "payload", None) is None:
        raise CarrierMismatch("product order needs elements with control and payload")
    if all(isinstance(x, int) for x in payload):
        return MARKING_ORDER.leq(a, b)
    return CONFIG_ORDER.leq(a, b)


# ----------------------------------------------------------------------
# Antichains
# ----------------------------------------------------------------------
class BasisIndex(Generic[T]):
    """Mutable minimal-element store bucketed by the order's ``bucket`` key."""

    __slots__ = ("order", "_buckets", "_size")

    def __init__(self, order: Wqo, elements: Iterable[T] = ()) -> None:
        self.order = order
        self._buckets: dict[Hashable, list[T]] = {}
        self._size = 0
        for element in elements:
            self.add(element)

    def covers(self, x: T) -> bool:
        leq = self.order.leq
        return any(leq(m, x) for m in self._buckets.get(self.order.bucket(x), ()))

    def add(self, x: T) -> bool:
        """Insert ``x`` unless covered; returns whether the basis changed."""

        key = self.order.bucket(x)
        bucket = self._buckets.setdefault(key, [])
        leq = self.order.leq
        if any(leq(m, x) for m in bucket):
            return False
        kept = [y for y in bucket if not leq(x, y)]
        self._size -= len(bucket) - len(kept)
        kept.append(x)
        self._buckets[key] = kept
        self._size += 1
        return True

    def contains(self, x: T) -> bool:
        return x in self._buckets.get(self.order.bucket(x), ())

    def __iter__(self) -> Iterator[T]:
        for bucket in self._buckets.values():
            yield from bucket

    def __len__(self) -> int:
        return self._size


@dataclass(frozen=True, slots=True)
class Antichain(Generic[T]):
    """Pairwise incomparable elements representing the upward closure ``↑elements``."""

    order: Wqo
    elements: tuple[T, ...] = ()

    @classmethod
    def of(cls, order: Wqo, elements: Iterable[T] = ()) -> "Antichain[T]":
        return cls(order, tuple(BasisIndex(order, elements)))

    def insert(self, x: T) -> "Antichain[T]":
        leq = self.order.leq
        if any(leq(m, x) for m in self.elements):
            return self
        kept = tuple(y for y in self.elements if not leq(x, y))
        return Antichain(self.order, kept + (x,))

    def covers(self, x: T) -> bool:
        leq = self.order.leq
        return any(leq(m, x) for m in self.elements)

    def is_empty(self) -> bool:
        return not self.elements

    def index(self) -> BasisIndex[T]:
        """Bucketed copy for repeated membership tests."""

        return BasisIndex(self.order, self.elements)

    def __iter__(self) -> Iterator[T]:
        return iter(self.elements)

    def __len__(self) -> int:
        return len(self.elements)

    def __contains__(self, x: object) -> bool:
        return x in self.elements


def antichain_insert(ac: Antichain[T], x: T) -> Antichain[T]:
    return ac.insert(x)


def covers(ac: Antichain[T], x: T) -> bool:
    return ac.covers(x)


def antichain_covers_set(a: Antichain[T], b: Antichain[T]) -> bool:
    """True iff ``↑b ⊆ ↑a``."""

    return all(a.covers(y) for y in b)


def same_upward_closure(a: Antichain[T], b: Antichain[T]) -> bool:
    return antichain_covers_set(a, b) and antichain_covers_set(b, a)


# ----------------------------------------------------------------------
# Saturation
# ----------------------------------------------------------------------
@dataclass(frozen=True, slots=True)
class UpwardTarget(Generic[T]):
    """An upward-closed target set ``↑basis``.

    ``q_states`` is set when the target was built from a set of control
    states (every basis element then has empty payload).
    """

    basis: Antichain[T]
    q_states: Optional[frozenset[str]] = None

    def contains(self, x: T) -> bool:
        return self.basis.covers(x)

    @property
    def is_q_state_target(self) -> bool:
        return self.q_states is not None

    def describe(self) -> str:
        if self.q_states is not None:
            return "Q-states " + "{" + ", ".join(sorted(self.q_states)) + "}"
        return "up " + "{" + ", ".join(str(e) for e in self.basis) + "}"


@dataclass(frozen=True, slots=True)
class SaturationResult(Generic[T]):
    basis: Antichain[T]
    rounds: int


def saturate_pre(
    basis: Antichain[T],
    min_pre: Callable[[T], Iterable[T]],
    *,
    limit: Optional[int] = None,
) -> SaturationResult[T]:
    """Least upward-closed fixpoint containing ``basis`` and closed under ``min_pre``.

    Saturation proceeds in breadth layers: every element added in the
    previous layer is expanded before the next one starts.  ``rounds``
    counts the layers that contributed at least one new minimal element.
    """

    if limit is None:
        limit = get_settings().basis_limit

    store: BasisIndex[T] = BasisIndex(basis.order, basis.elements)
    frontier = list(store)
    rounds = 0
    while frontier:
        fresh: list[T] = []
        for element in frontier:
            for candidate in min_pre(element):
                if store.add(candidate):
                    fresh.append(candidate)
                    if len(store) > limit:
                        raise ResourceExhausted(
                            f"saturation basis exceeded {limit} elements after {rounds + 1} round(s)"
                        )
        frontier = [m for m in fresh if store.contains(m)]
        if frontier:
            rounds += 1
            _LOGGER.debug("saturation round %d added %d element(s)", rounds, len(frontier))

    _LOGGER.info("Saturation finished after %d round(s) with %d basis element(s)", rounds, len(store))
    return SaturationResult(Antichain(basis.order, tuple(store)), rounds)


__all__ = [
    "Antichain",
    "BasisIndex",
    "CONFIG_ORDER",
    "ChannelwiseOrder",
    "MARKING_ORDER",
    "OrderKind",
    "ProductOrder",
    "SUBWORD_ORDER",
    "SaturationResult",
    "SubwordOrder",
    "VECTOR_ORDER",
    "UpwardTarget",
    "VectorOrder",
    "Wqo",
    "antichain_covers_set",
    "antichain_insert",
    "covers",
    "same_upward_closure",
    "saturate_pre",
    "subword_leq",
    "wqo_leq",
]
