"""Run one query against a parsed model and build the report shared by the CLI and HTTP API."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from fractions import Fraction
from typing import Any, Callable, Optional

from app.core import (
    Approx,
    DecisivenessCertificate,
    EffectiveChain,
    Objective,
    QualQuery,
    QueryError,
    TriBool,
    format_rational,
)
from app.models import plcs as plcs_mod
from app.models import pntm as pntm_mod
from app.models import pvass as pvass_mod
from app.parsing import ModelDocument, ModelKind, Target, parse_document, parse_target
from app.schemas import (
    CertificateRead,
    ModelSummary,
    OracleBand,
    OracleRead,
    Outcome,
    QueryKind,
    QueryReport,
    QuerySpec,
    RationalRead,
    SimulationRead,
    TimingBlock,
)
from app.services.algorithms import approx_reach, approx_repeat_reach
from app.services.oracle import Event, exact_reach_prob, exact_repeat_reach_prob, monte_carlo, truncate

_LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True, slots=True)
class PreparedQuery:
    spec: QuerySpec
    document: ModelDocument
    target: Optional[Target]


# -------------------------------------------------------------------
# Model plumbing
# -------------------------------------------------------------------
def summarize(document: ModelDocument) -> ModelSummary:
    model = document.model
    details: dict[str, str] = {}
    if document.kind is ModelKind.PVASS:
        details["vars"] = ",".join(model.vars)
    elif document.kind is ModelKind.PLCS:
        details["channels"] = ",".join(model.channels)
        details["messages"] = "".join(model.messages)
        details["loss"] = format_rational(model.loss)
    else:
        details["tapes"] = str(model.tapes)
        details["gamma"] = "".join(model.tape_alphabet)
        details["epsilon"] = format_rational(model.epsilon)
    return ModelSummary(
        kind=document.kind.value,
        control_states=len(model.control_states),
        transitions=len(model.transitions),
        details=details,
    )


def describe_target(target: Optional[Target]) -> Optional[str]:
    if target is None:
        return None
    if isinstance(target, frozenset):
        return "Q-states {" + ", ".join(sorted(target)) + "}"
    return target.describe()


def prepare(spec: QuerySpec) -> PreparedQuery:
    document = parse_document(spec.source, auto_total=spec.auto_total, auto_selfloop=spec.auto_selfloop)
    target = parse_target(document, spec.target) if spec.target else document.target
    if target is None and spec.kind is not QueryKind.VALIDATE:
        raise QueryError("no target: declare one in the model file or pass --target")
    return PreparedQuery(spec, document, target)


def build_chain(document: ModelDocument, target: Target) -> EffectiveChain:
    if document.kind is ModelKind.PVASS:
        return pvass_mod.PvassChain(document.model, target)
    if document.kind is ModelKind.PLCS:
        return plcs_mod.PlcsChain(document.model, target)
    return pntm_mod.PntmChain(document.model, target)


def _oracle_chain(document: ModelDocument, target: Target) -> EffectiveChain:
    if document.kind is ModelKind.PNTM:
        return pntm_mod.CappedPntmChain(document.model, target)
    return build_chain(document, target)


def _bound_predicate(kind: ModelKind, bound: Optional[int]) -> Callable[[Any], bool]:
    if bound is None:
        return lambda _: True
    if kind is ModelKind.PVASS:
        return lambda s: max(s.valuation, default=0) <= bound
    if kind is ModelKind.PLCS:
        return lambda s: max((len(w) for w in s.config.contents), default=0) <= bound
    return lambda s: max(len(t.cells) for t in s.tapes) <= bound


def qual_decide(document: ModelDocument, target: Target, query: QualQuery) -> TriBool:
    if document.kind is ModelKind.PVASS:
        return pvass_mod.qual_decide(document.model, None, target, query)
    if document.kind is ModelKind.PLCS:
        return plcs_mod.qual_decide(document.model, None, target, query)
    return pntm_mod.qual_decide(document.model, None, target, query)


def certify(document: ModelDocument, target: Target) -> DecisivenessCertificate:
    label = describe_target(target) or ""
    if document.kind is ModelKind.PVASS:
        return pvass_mod.decisiveness_certificate(document.model, target)
    if document.kind is ModelKind.PLCS:
        return plcs_mod.certificate(document.model, label)
    return pntm_mod.certificate(document.model, label)


# -------------------------------------------------------------------
# Public API
# -------------------------------------------------------------------
def run(spec: QuerySpec) -> QueryReport:
    """Execute ``spec``; :class:`~app.core.CheckerError` subclasses propagate to the caller."""

    started = datetime.now(timezone.utc)
    clock = time.perf_counter()
    prepared = prepare(spec)
    document, target = prepared.document, prepared.target
    fields: dict[str, Any] = {
        "query": spec.kind,
        "path": spec.path,
        "model": summarize(document),
        "target": describe_target(target),
    }
    _LOGGER.info("Running %s on a %s model", spec.kind.value, document.kind.value)

    if spec.kind is QueryKind.VALIDATE:
        fields["outcome"] = Outcome.VALID
    elif spec.kind.is_qualitative:
        objective = Objective.REACH if spec.kind is QueryKind.QUAL_REACH else Objective.REPEAT
        assert spec.side is not None
        verdict = qual_decide(document, target, QualQuery(objective, spec.side))
        if verdict.is_unknown:
            _LOGGER.info("Verdict unknown: %s", verdict.reason)
        fields.update(
            outcome=Outcome.UNKNOWN if verdict.is_unknown else Outcome.DECIDED,
            side=spec.side,
            verdict=verdict.verdict.value,
            reason=verdict.reason,
        )
    elif spec.kind.is_approximate:
        chain = build_chain(document, target)
        run_query = approx_reach if spec.kind is QueryKind.APPROX_REACH else approx_repeat_reach
        result = run_query(chain, spec.eps_value, spec.budget)
        fields.update(eps=spec.eps, depth=result.depth, expansions=result.expansions)
        if isinstance(result, Approx):
            fields.update(
                outcome=Outcome.COMPUTED,
                theta=RationalRead.of(result.theta),
                lower=RationalRead.of(result.theta),
                upper=RationalRead.of(min(Fraction(1), result.theta + result.eps)),
            )
        else:
            fields.update(
                outcome=Outcome.BUDGET_EXHAUSTED,
                lower=RationalRead.of(result.lower),
                upper=RationalRead.of(result.upper),
            )
    elif spec.kind is QueryKind.CERTIFY:
        fields.update(outcome=Outcome.COMPUTED, certificate=CertificateRead.of(certify(document, target)))
    elif spec.kind is QueryKind.ORACLE:
        chain = _oracle_chain(document, target)
        fc = truncate(chain, _bound_predicate(document.kind, spec.bound), spec.state_limit)
        reach_lo, reach_hi = exact_reach_prob(fc)
        repeat_lo, repeat_hi = exact_repeat_reach_prob(fc)
        fields.update(
            outcome=Outcome.COMPUTED,
            oracle=OracleRead(
                states=len(fc),
                overflow=fc.overflow is not None,
                bound=spec.bound,
                reach=OracleBand(lower=RationalRead.of(reach_lo), upper=RationalRead.of(reach_hi)),
                repeat=OracleBand(lower=RationalRead.of(repeat_lo), upper=RationalRead.of(repeat_hi)),
            ),
        )
    else:
        chain = build_chain(document, target)
        estimate = monte_carlo(chain, Event.REACH, spec.runs, spec.horizon, spec.seed)
        fields.update(
            outcome=Outcome.COMPUTED,
            simulation=SimulationRead(
                generator=estimate.generator,
                seed=spec.seed,
                runs=estimate.runs,
                horizon=spec.horizon,
                successes=estimate.successes,
                estimate=estimate.estimate,
                low=estimate.low,
                high=estimate.high,
            ),
        )

    if spec.with_certificate and fields.get("certificate") is None and target is not None:
        fields["certificate"] = CertificateRead.of(certify(document, target))

    fields["timing"] = TimingBlock(
        started_at=started.isoformat(),
        wall_seconds=round(time.perf_counter() - clock, 6),
    )
    return QueryReport(**fields)


__all__ = [
    "PreparedQuery",
    "build_chain",
    "certify",
    "describe_target",
    "prepare",
    "qual_decide",
    "run",
    "summarize",
]
