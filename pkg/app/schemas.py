# app/schemas.py
# ------------------------------------------------------------
# Pydantic v2 schemas for query requests and reports
# ------------------------------------------------------------
from __future__ import annotations

import enum
import re
from fractions import Fraction
from typing import Any, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.core import (
    CertificateKind,
    DecisivenessCertificate,
    Side,
    as_rational,
    decimal_rendering,
    format_rational,
)

_CONTROL_CHAR_RE = re.compile(r"[\x00-\x08\x0b\x0c\x0e-\x1f]")


def _sanitize_single_line_text(value: Optional[str]) -> Optional[str]:
    if value is None:
        return value
    if not isinstance(value, str):
        raise TypeError("Expected string input")
    cleaned = _CONTROL_CHAR_RE.sub("", value).strip()
    if not cleaned:
        return None
    if any(ch in {"\n", "\r"} for ch in cleaned):
        raise ValueError("Value must be a single line of text")
    return cleaned


# ============================================================
# Rationals
# ============================================================

class RationalRead(BaseModel):
    """An exact rational as ``"num/den"`` plus a rounded decimal rendering."""

    exact: str
    decimal: str

    @classmethod
    def of(cls, value: Fraction) -> "RationalRead":
        return cls(exact=format_rational(value), decimal=decimal_rendering(value))


# ============================================================
# Queries
# ============================================================

class QueryKind(str, enum.Enum):
    VALIDATE = "validate"
    QUAL_REACH = "qual-reach"
    QUAL_REPEAT = "qual-repeat"
    APPROX_REACH = "approx-reach"
    APPROX_REPEAT = "approx-repeat"
    CERTIFY = "certify"
    ORACLE = "oracle"
    SIMULATE = "simulate"

    @property
    def is_qualitative(self) -> bool:
        return self in {QueryKind.QUAL_REACH, QueryKind.QUAL_REPEAT}

    @property
    def is_approximate(self) -> bool:
        return self in {QueryKind.APPROX_REACH, QueryKind.APPROX_REPEAT}


class QuerySpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    source: str = Field(description="Model text in one of the pvass/plcs/pntm formats")
    path: Optional[str] = None
    kind: QueryKind
    side: Optional[Side] = None
    eps: Optional[str] = None
    budget: Optional[int] = Field(default=None, ge=0)
    target: Optional[str] = None
    auto_total: bool = False
    auto_selfloop: bool = False
    with_certificate: bool = False
    seed: int = Field(default=0, ge=0, lt=2**64)
    runs: int = Field(default=10_000, ge=1)
    horizon: int = Field(default=1_000, ge=0)
    bound: Optional[int] = Field(default=None, ge=0)
    state_limit: int = Field(default=10_000, ge=1)

    @field_validator("target", mode="before")
    @classmethod
    def _clean_target(cls, value: Optional[str]) -> Optional[str]:
        return _sanitize_single_line_text(value)

    @field_validator("eps", mode="before")
    @classmethod
    def _normalise_eps(cls, value: Any) -> Optional[str]:
        if value is None:
            return None
        try:
            eps = as_rational(value)
        except ValueError as exc:
            raise ValueError(f"eps must be an exact rational such as 1/100: {exc}") from None
        if not 0 < eps < 1:
            raise ValueError("eps must satisfy 0<eps<1")
        return format_rational(eps)

    @model_validator(mode="after")
    def _check_kind_fields(self) -> "QuerySpec":
        if self.kind.is_approximate and self.eps is None:
            raise ValueError(f"{self.kind.value} needs eps")
        if not self.kind.is_approximate and self.eps is not None:
            raise ValueError(f"{self.kind.value} takes no eps")
        if self.kind.is_qualitative and self.side is None:
            raise ValueError(f"{self.kind.value} needs side one or zero")
        if not self.kind.is_qualitative and self.side is not None:
            raise ValueError(f"{self.kind.value} takes no side")
        return self

    @property
    def eps_value(self) -> Optional[Fraction]:
        return None if self.eps is None else Fraction(self.eps)


# ============================================================
# Reports
# ============================================================

class ModelSummary(BaseModel):
    kind: str
    control_states: int
    transitions: int
    details: dict[str, str] = Field(default_factory=dict)


class CertificateRead(BaseModel):
    kind: CertificateKind
    target: str = ""
    citation: Optional[str] = None
    beta: Optional[RationalRead] = None
    span: Optional[int] = None
    alpha: Optional[RationalRead] = None

    @classmethod
    def of(cls, cert: DecisivenessCertificate) -> "CertificateRead":
        return cls(
            kind=cert.kind,
            target=cert.target,
            citation=cert.citation,
            beta=None if cert.beta is None else RationalRead.of(cert.beta),
            span=cert.span,
            alpha=None if cert.alpha is None else RationalRead.of(cert.alpha),
        )


class OracleBand(BaseModel):
    lower: RationalRead
    upper: RationalRead


class OracleRead(BaseModel):
    states: int
    overflow: bool
    bound: Optional[int] = None
    reach: OracleBand
    repeat: OracleBand


class SimulationRead(BaseModel):
    generator: str
    seed: int
    runs: int
    horizon: int
    successes: int
    estimate: float
    low: float
    high: float


class TimingBlock(BaseModel):
    started_at: str
    wall_seconds: float


class Outcome(str, enum.Enum):
    VALID = "valid"
    DECIDED = "decided"
    COMPUTED = "computed"
    UNKNOWN = "unknown"
    BUDGET_EXHAUSTED = "budget-exhausted"


class QueryReport(BaseModel):
    """Machine-readable result of one query; everything but ``timing`` is deterministic."""

    query: QueryKind
    outcome: Outcome
    path: Optional[str] = None
    model: ModelSummary
    target: Optional[str] = None
    side: Optional[Side] = None
    verdict: Optional[str] = None
    reason: Optional[str] = None
    eps: Optional[str] = None
    theta: Optional[RationalRead] = None
    lower: Optional[RationalRead] = None
    upper: Optional[RationalRead] = None
    depth: Optional[int] = None
    expansions: Optional[int] = None
    certificate: Optional[CertificateRead] = None
    oracle: Optional[OracleRead] = None
    simulation: Optional[SimulationRead] = None
    timing: TimingBlock

    @property
    def exit_code(self) -> int:
        if self.outcome in {Outcome.UNKNOWN, Outcome.BUDGET_EXHAUSTED}:
            return 2
        return 0

    def deterministic_json(self) -> str:
        return self.model_dump_json(exclude={"timing"}, exclude_none=True)


class ErrorReport(BaseModel):
    error: str
    message: str
    line: Optional[int] = None
    column: Optional[int] = None


# ============================================================
# HTTP requests
# ============================================================

class ValidateRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    source: str = Field(min_length=1)
    auto_total: bool = False
    auto_selfloop: bool = False


class ValidateResponse(BaseModel):
    ok: bool
    model: Optional[ModelSummary] = None
    target: Optional[str] = None
    printed: Optional[str] = None
    error: Optional[ErrorReport] = None


__all__ = [
    "CertificateRead",
    "ErrorReport",
    "ModelSummary",
    "OracleBand",
    "OracleRead",
    "Outcome",
    "QueryKind",
    "QueryReport",
    "QuerySpec",
    "RationalRead",
    "SimulationRead",
    "TimingBlock",
    "ValidateRequest",
    "ValidateResponse",
]
