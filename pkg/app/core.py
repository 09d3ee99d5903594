"""Exact probabilities, the effective chain contract and shared result types."""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import (
    Any,
    Generic,
    Hashable,
    Iterable,
    Iterator,
    Optional,
    Protocol,
    Sequence,
    TypeVar,
    Union,
    runtime_checkable,
)

_LOGGER = logging.getLogger(__name__)

S = TypeVar("S", bound=Hashable)

Rational = Fraction


# ----------------------------------------------------------------------
# Errors
# ----------------------------------------------------------------------
class CheckerError(Exception):
    """Base error for every failure surfaced by the checker."""

    code = "checker_error"


class ResourceExhausted(CheckerError):
    """Raised when a saturation or search exceeds its configured limit."""

    code = "resource_exhausted"


class InvalidEpsilon(CheckerError):
    code = "invalid_epsilon"


class Avoid2Unsupported(CheckerError):
    """Raised by chains that cannot decide membership in unreachable(unreachable(F))."""

    code = "avoid2_unsupported"


class MalformedState(CheckerError):
    code = "malformed_state"


class NotQStateTarget(CheckerError):
    code = "not_q_state_target"


class MalformedProgram(CheckerError):
    code = "malformed_program"


class LimitExceeded(CheckerError):
    code = "limit_exceeded"


class SingularSystem(CheckerError):
    code = "singular_system"


class CarrierMismatch(CheckerError):
    code = "carrier_mismatch"


class QueryError(CheckerError):
    """Raised when a query is incompatible with the model it targets."""

    code = "query_error"


class _AnchoredError(CheckerError):
    """Error that may point at a 1-based line and column of model text."""

    def __init__(self, message: str, line: int = 0, column: int = 0) -> None:
        self.message = message
        self.line = line
        self.column = column
        location = f"line {line}, column {column}: " if line else ""
        super().__init__(f"{location}{message}")


class ModelSyntaxError(_AnchoredError):
    code = "model_syntax_error"


class ModelValidationError(_AnchoredError):
    code = "model_validation_error"


# ----------------------------------------------------------------------
# Rationals
# ----------------------------------------------------------------------
def as_rational(value: Union[str, int, Fraction]) -> Fraction:
    """Parse ``value`` as an exact rational; floats are rejected."""

    if isinstance(value, bool) or isinstance(value, float):
        raise ValueError(f"expected an exact rational, got {value!r}")
    if isinstance(value, (int, Fraction)):
        return Fraction(value)
    text = str(value).strip()
    if not text:
        raise ValueError("empty rational")
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise ValueError(f"invalid rational {value!r}") from exc


def format_rational(value: Fraction) -> str:
    return f"{value.numerator}/{value.denominator}"


def decimal_rendering(value: Fraction, digits: int = 12) -> str:
    """Render ``value`` as a rounded decimal string without going through floats."""

    sign = "-" if value < 0 else ""
    value = abs(value)
    scaled = round(value * 10**digits)
    whole, frac = divmod(scaled, 10**digits)
    text = f"{whole}.{frac:0{digits}d}".rstrip("0")
    if text.endswith("."):
        text += "0"
    return sign + text


# ----------------------------------------------------------------------
# Distributions
# ----------------------------------------------------------------------
@dataclass(frozen=True, slots=True)
class Distribution(Generic[S]):
    """A finite discrete distribution with exact rational entries.

    Entries keep insertion order and hold distinct states.  The constructors
    below merge duplicate states and drop zero entries but do not force the
    total to one, so broken chains stay observable to the contract checker.
    """

    entries: tuple[tuple[S, Fraction], ...]

    @classmethod
    def merge_entries(cls, pairs: Iterable[tuple[S, Fraction]]) -> "Distribution[S]":
        merged: dict[S, Fraction] = {}
        for state, probability in pairs:
            merged[state] = merged.get(state, Fraction(0)) + probability
        return cls(tuple((s, p) for s, p in merged.items() if p != 0))

    @classmethod
    def from_weights(cls, pairs: Iterable[tuple[S, int]]) -> "Distribution[S]":
        """Normalise positive integer weights into probabilities."""

        items = list(pairs)
        total = sum(w for _, w in items)
        if total <= 0:
            raise ValueError("weights must have a positive total")
        return cls.merge_entries((s, Fraction(w, total)) for s, w in items)

    @classmethod
    def point_mass(cls, state: S) -> "Distribution[S]":
        return cls(((state, Fraction(1)),))

    unit = point_mass

    def total(self) -> Fraction:
        return sum((p for _, p in self.entries), Fraction(0))

    def support(self) -> tuple[S, ...]:
        return tuple(s for s, _ in self.entries)

    def probability(self, state: S) -> Fraction:
        for s, p in self.entries:
            if s == state:
                return p
        return Fraction(0)

    def as_dict(self) -> dict[S, Fraction]:
        return dict(self.entries)

    def map_states(self, fn) -> "Distribution":
        return Distribution.merge_entries((fn(s), p) for s, p in self.entries)

    def __iter__(self) -> Iterator[tuple[S, Fraction]]:
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)


# ----------------------------------------------------------------------
# Tri-valued verdicts
# ----------------------------------------------------------------------
class Verdict(str, enum.Enum):
    HOLDS = "holds"
    FAILS = "fails"
    UNKNOWN = "unknown"


@dataclass(frozen=True, slots=True)
class TriBool:
    verdict: Verdict
    reason: Optional[str] = None
    evidence: Any = None

    @classmethod
    def holds(cls, evidence: Any = None, reason: Optional[str] = None) -> "TriBool":
        return cls(Verdict.HOLDS, reason, evidence)

    @classmethod
    def fails(cls, evidence: Any = None, reason: Optional[str] = None) -> "TriBool":
        return cls(Verdict.FAILS, reason, evidence)

    @classmethod
    def unknown(cls, reason: str) -> "TriBool":
        return cls(Verdict.UNKNOWN, reason)

    @classmethod
    def of(cls, value: bool, evidence: Any = None, reason: Optional[str] = None) -> "TriBool":
        return cls.holds(evidence, reason) if value else cls.fails(evidence, reason)

    @property
    def is_holds(self) -> bool:
        return self.verdict is Verdict.HOLDS

    @property
    def is_fails(self) -> bool:
        return self.verdict is Verdict.FAILS

    @property
    def is_unknown(self) -> bool:
        return self.verdict is Verdict.UNKNOWN

    def negate(self) -> "TriBool":
        """Swap Holds and Fails; Unknown keeps its reason."""

        if self.verdict is Verdict.HOLDS:
            return TriBool(Verdict.FAILS, self.reason, self.evidence)
        if self.verdict is Verdict.FAILS:
            return TriBool(Verdict.HOLDS, self.reason, self.evidence)
        return self

    def conjoin(self, other: "TriBool") -> "TriBool":
        if self.is_fails:
            return self
        if other.is_fails:
            return other
        if self.is_unknown:
            return self
        return other


class Objective(str, enum.Enum):
    REACH = "reach"
    REPEAT = "repeat"


class Side(str, enum.Enum):
    ONE = "one"
    ZERO = "zero"


@dataclass(frozen=True, slots=True)
class QualQuery:
    objective: Objective
    side: Side

    def __str__(self) -> str:
        return f"{self.objective.value}-{self.side.value}"


REACH_ONE = QualQuery(Objective.REACH, Side.ONE)
REACH_ZERO = QualQuery(Objective.REACH, Side.ZERO)
REPEAT_ONE = QualQuery(Objective.REPEAT, Side.ONE)
REPEAT_ZERO = QualQuery(Objective.REPEAT, Side.ZERO)


# ----------------------------------------------------------------------
# Query results
# ----------------------------------------------------------------------
@dataclass(frozen=True, slots=True)
class Qualitative:
    result: TriBool


@dataclass(frozen=True, slots=True)
class Approx:
    theta: Fraction
    eps: Fraction
    depth: int
    yes: Fraction
    no: Fraction
    expansions: int

    def __post_init__(self) -> None:
        if self.theta != self.yes:
            raise ValueError("theta must equal the accumulated yes mass")
        if self.yes + self.no < 1 - self.eps:
            raise ValueError("approximation has not reached the requested precision")


@dataclass(frozen=True, slots=True)
class BudgetExhausted:
    yes: Fraction
    no: Fraction
    expansions: int
    depth: int = 0

    @property
    def lower(self) -> Fraction:
        return self.yes

    @property
    def upper(self) -> Fraction:
        return 1 - self.no


QueryResult = Union[Qualitative, Approx, BudgetExhausted]


# ----------------------------------------------------------------------
# Decisiveness certificates
# ----------------------------------------------------------------------
class CertificateKind(str, enum.Enum):
    FINITE_ATTRACTOR = "finite-attractor"
    GLOBALLY_COARSE = "globally-coarse"
    UNVERIFIED = "unverified"


@dataclass(frozen=True, slots=True)
class DecisivenessCertificate:
    kind: CertificateKind
    target: str = ""
    citation: Optional[str] = None
    beta: Optional[Fraction] = None
    span: Optional[int] = None
    alpha: Optional[Fraction] = None

    def __post_init__(self) -> None:
        if self.kind is CertificateKind.GLOBALLY_COARSE:
            if self.beta is None or self.span is None or self.alpha is None:
                raise ValueError("globally coarse certificates need beta, span and alpha")
            if not 0 < self.beta <= 1:
                raise ValueError("beta must lie in (0, 1]")
            if self.alpha != self.beta**self.span:
                raise ValueError("alpha must equal beta ** span")

    @classmethod
    def globally_coarse(cls, beta: Fraction, span: int, target: str = "") -> "DecisivenessCertificate":
        return cls(
            CertificateKind.GLOBALLY_COARSE,
            target=target,
            beta=beta,
            span=span,
            alpha=beta**span,
        )

    @classmethod
    def finite_attractor(cls, citation: str, target: str = "") -> "DecisivenessCertificate":
        return cls(CertificateKind.FINITE_ATTRACTOR, target=target, citation=citation)

    @classmethod
    def unverified(cls, target: str = "") -> "DecisivenessCertificate":
        return cls(CertificateKind.UNVERIFIED, target=target)


def alpha_bound_depth(cert: DecisivenessCertificate, eps: Fraction) -> Optional[int]:
    """Smallest depth ``d`` with ``(1 - alpha) ** (d // span) <= eps``.

    Returns ``None`` unless the certificate is globally coarse.  A span of
    zero means every state either is in the target or cannot reach it, so
    the enumeration settles at depth zero.
    """

    if cert.kind is not CertificateKind.GLOBALLY_COARSE:
        return None
    assert cert.alpha is not None and cert.span is not None
    if cert.span == 0 or cert.alpha == 1:
        return cert.span
    rounds = 0
    residue = Fraction(1)
    while residue > eps:
        residue *= 1 - cert.alpha
        rounds += 1
    return rounds * cert.span


# ----------------------------------------------------------------------
# Effective chains
# ----------------------------------------------------------------------
@runtime_checkable
class EffectiveChain(Protocol[S]):
    """A countable Markov chain with decidable target oracles.

    ``in_avoid`` decides membership in unreachable(F); ``in_avoid2`` decides
    membership in unreachable(unreachable(F)) and raises
    :class:`Avoid2Unsupported` when the model cannot provide it.
    """

    def initial(self) -> S: ...

    def successors(self, state: S) -> Distribution[S]: ...

    def in_target(self, state: S) -> bool: ...

    def in_avoid(self, state: S) -> bool: ...

    def in_avoid2(self, state: S) -> bool: ...


def supports_avoid2(chain: EffectiveChain) -> bool:
    try:
        chain.in_avoid2(chain.initial())
    except Avoid2Unsupported:
        return False
    return True


@dataclass(frozen=True, slots=True)
class ContractViolation:
    state: Any
    kind: str
    detail: str


@dataclass(frozen=True, slots=True)
class ContractReport:
    checked: int
    violations: tuple[ContractViolation, ...] = field(default_factory=tuple)

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_chain_contract(chain: EffectiveChain, samples: Sequence[Any]) -> ContractReport:
    """Check the Markov-chain axioms and oracle consistency on ``samples``."""

    violations: list[ContractViolation] = []
    for state in samples:
        try:
            dist = chain.successors(state)
        except CheckerError as exc:
            violations.append(ContractViolation(state, "successors", str(exc)))
            continue
        seen: set = set()
        for succ, probability in dist:
            if probability <= 0:
                violations.append(
                    ContractViolation(state, "nonpositive", f"probability {probability} for {succ!r}")
                )
            if succ in seen:
                violations.append(ContractViolation(state, "duplicate", f"state {succ!r} listed twice"))
            seen.add(succ)
        total = dist.total()
        if total != 1:
            violations.append(ContractViolation(state, "sum", f"probabilities sum to {total}, not 1"))

        target = chain.in_target(state)
        avoid = chain.in_avoid(state)
        if target and avoid:
            violations.append(ContractViolation(state, "target-avoid", "state is both in F and in unreachable(F)"))
        try:
            avoid2 = chain.in_avoid2(state)
        except Avoid2Unsupported:
            avoid2 = False
        if avoid2 and avoid:
            violations.append(
                ContractViolation(state, "avoid-avoid2", "state is in unreachable(F) and its complement's avoid set")
            )

    if violations:
        _LOGGER.info("Chain contract check found %d violation(s)", len(violations))
    return ContractReport(checked=len(samples), violations=tuple(violations))


__all__ = [
    "Approx",
    "Avoid2Unsupported",
    "BudgetExhausted",
    "CarrierMismatch",
    "CertificateKind",
    "CheckerError",
    "ContractReport",
    "ContractViolation",
    "DecisivenessCertificate",
    "Distribution",
    "EffectiveChain",
    "InvalidEpsilon",
    "LimitExceeded",
    "MalformedProgram",
    "MalformedState",
    "ModelSyntaxError",
    "ModelValidationError",
    "NotQStateTarget",
    "Objective",
    "QualQuery",
    "Qualitative",
    "QueryError",
    "QueryResult",
    "REACH_ONE",
    "REACH_ZERO",
    "REPEAT_ONE",
    "REPEAT_ZERO",
    "Rational",
    "ResourceExhausted",
    "Side",
    "SingularSystem",
    "TriBool",
    "Verdict",
    "alpha_bound_depth",
    "as_rational",
    "decimal_rendering",
    "format_rational",
    "supports_avoid2",
    "validate_chain_contract",
]
