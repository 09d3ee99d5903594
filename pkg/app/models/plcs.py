"""Probabilistic lossy channel systems.

A chain step is a weighted discrete transition followed by independent
message losses, and the initial configuration is subjected to one leading
loss.  Upward-closed sets of configurations are handled through their
antichain bases under the channelwise subword order; downward-closed sets
only through their empty-channel bottoms, which is exact for lossy
semantics since any configuration can lose all of its messages.

The chain exposes two kinds of states.  The initial state is *unsettled*:
the next thing that happens to it is a loss.  Every other state is
*settled*: it was produced by a loss and the next thing that happens to it
is a discrete step.  The oracles below account for this when turning
lossy-system predecessor sets into chain-level reachability.
"""

from __future__ import annotations

import enum
import itertools
import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Iterable, Iterator, Optional

from pydantic import BaseModel, ConfigDict, PrivateAttr, field_validator, model_validator

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
from app.wqo import CONFIG_ORDER, Antichain, SaturationResult, UpwardTarget, saturate_pre

_LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True, slots=True, order=True)
class Config:
    control: str
    contents: tuple[str, ...]

    @property
    def payload(self) -> tuple[str, ...]:
        return self.contents

    def __str__(self) -> str:
        words = ", ".join(f'"{w}"' for w in self.contents)
        return f"({self.control}, {words})" if words else f"({self.control})"


class OpKind(str, enum.Enum):
    NOP = "nop"
    SEND = "send"
    RECV = "recv"


@dataclass(frozen=True, slots=True)
class LcsTransition:
    src: str
    kind: OpKind
    dst: str
    weight: int = 1
    channel: Optional[str] = None
    message: Optional[str] = None

    @property
    def always_enabled(self) -> bool:
        return self.kind is not OpKind.RECV


class Plcs(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    control_states: tuple[str, ...]
    channels: tuple[str, ...]
    messages: tuple[str, ...]
    transitions: tuple[LcsTransition, ...]
    loss: Fraction
    initial: Config

    _outgoing: dict[str, tuple[LcsTransition, ...]] = PrivateAttr(default_factory=dict)
    _incoming: dict[str, tuple[LcsTransition, ...]] = PrivateAttr(default_factory=dict)
    _channel_index: dict[str, int] = PrivateAttr(default_factory=dict)

    @field_validator("loss")
    @classmethod
    def _loss_in_range(cls, value: Fraction) -> Fraction:
        if not 0 < value < 1:
            raise ValueError("λ must satisfy 0<λ<1")
        return value

    @field_validator("messages")
    @classmethod
    def _single_symbols(cls, value: tuple[str, ...]) -> tuple[str, ...]:
        if any(len(m) != 1 for m in value):
            raise ValueError("messages must be single characters")
        if len(set(value)) != len(value):
            raise ValueError("messages must be unique")
        return value

    @field_validator("control_states", "channels")
    @classmethod
    def _names_unique(cls, value: tuple[str, ...]) -> tuple[str, ...]:
        if len(set(value)) != len(value):
            raise ValueError("names must be unique")
        return value

    @model_validator(mode="after")
    def _check_structure(self) -> "Plcs":
        states = set(self.control_states)
        if not states:
            raise ValueError("at least one control state is required")
        channels = set(self.channels)
        messages = set(self.messages)
        for t in self.transitions:
            if t.src not in states or t.dst not in states:
                raise ValueError(f"transition {t.src} -> {t.dst} uses an undeclared control state")
            if t.weight <= 0:
                raise ValueError(f"transition {t.src} -> {t.dst} weight must be positive")
            if t.kind is not OpKind.NOP:
                if t.channel not in channels:
                    raise ValueError(f"transition {t.src} -> {t.dst} uses undeclared channel {t.channel!r}")
                if t.message not in messages:
                    raise ValueError(f"transition {t.src} -> {t.dst} uses undeclared message {t.message!r}")
        if self.initial.control not in states:
            raise ValueError(f"initial control state {self.initial.control!r} is undeclared")
        if len(self.initial.contents) != len(self.channels):
            raise ValueError("initial configuration must give a word to every channel")
        if any(ch not in messages for word in self.initial.contents for ch in word):
            raise ValueError("initial channel contents use undeclared messages")
        return self

    def model_post_init(self, __context: Any) -> None:
        outgoing: dict[str, list[LcsTransition]] = {q: [] for q in self.control_states}
        incoming: dict[str, list[LcsTransition]] = {q: [] for q in self.control_states}
        for t in self.transitions:
            outgoing[t.src].append(t)
            incoming[t.dst].append(t)
        self._outgoing = {q: tuple(ts) for q, ts in outgoing.items()}
        self._incoming = {q: tuple(ts) for q, ts in incoming.items()}
        self._channel_index = {c: i for i, c in enumerate(self.channels)}

    def outgoing(self, control: str) -> tuple[LcsTransition, ...]:
        return self._outgoing.get(control, ())

    def incoming(self, control: str) -> tuple[LcsTransition, ...]:
        return self._incoming.get(control, ())

    def channel_index(self, name: Optional[str]) -> int:
        return self._channel_index[name]  # type: ignore[index]

    def empty(self, control: str) -> Config:
        return Config(control, ("",) * len(self.channels))

    def config(self, control: str, **words: str) -> Config:
        unknown = set(words) - set(self.channels)
        if unknown:
            raise MalformedState(f"unknown channel(s): {', '.join(sorted(unknown))}")
        return Config(control, tuple(words.get(c, "") for c in self.channels))


# ----------------------------------------------------------------------
# Validation and targets
# ----------------------------------------------------------------------
def ensure_deadlock_free(m: Plcs, *, auto_selfloop: bool = False) -> Plcs:
    stuck = [q for q in m.control_states if not any(t.always_enabled for t in m.outgoing(q))]
    if not stuck:
        return m
    if not auto_selfloop:
        raise ModelValidationError(f"control state {stuck[0]!r} has no nop or send transition (deadlock possible)")
    _LOGGER.info("Adding nop self-loops to %d control state(s)", len(stuck))
    loops = tuple(LcsTransition(q, OpKind.NOP, q, 1) for q in stuck)
    return Plcs(
        control_states=m.control_states,
        channels=m.channels,
        messages=m.messages,
        transitions=m.transitions + loops,
        loss=m.loss,
        initial=m.initial,
    )


def q_target(m: Plcs, q_states: Iterable[str]) -> UpwardTarget[Config]:
    chosen = frozenset(q_states)
    unknown = chosen - set(m.control_states)
    if unknown:
        raise MalformedState(f"unknown control state(s): {', '.join(sorted(unknown))}")
    return UpwardTarget(Antichain.of(CONFIG_ORDER, (m.empty(q) for q in sorted(chosen))), chosen)


def up_target(configs: Iterable[Config]) -> UpwardTarget[Config]:
    basis = Antichain.of(CONFIG_ORDER, configs)
    if basis.elements and all(not any(e.contents) for e in basis):
        return UpwardTarget(basis, frozenset(e.control for e in basis))
    return UpwardTarget(basis)


# ----------------------------------------------------------------------
# Semantics
# ----------------------------------------------------------------------
def _word_losses(word: str, lam: Fraction) -> dict[str, Fraction]:
    outcomes: dict[str, Fraction] = {"": Fraction(1)}
    keep = 1 - lam
    for symbol in word:
        grown: dict[str, Fraction] = {}
        for prefix, p in outcomes.items():
            grown[prefix + symbol] = grown.get(prefix + symbol, Fraction(0)) + p * keep
            grown[prefix] = grown.get(prefix, Fraction(0)) + p * lam
        outcomes = grown
    return outcomes


def loss_distribution(cfg: Config, lam: Fraction) -> Distribution[Config]:
    """Every message is lost independently with probability ``lam``."""

    per_channel = [tuple(_word_losses(word, lam).items()) for word in cfg.contents]
    pairs = []
    for combo in itertools.product(*per_channel):
        probability = Fraction(1)
        for _, p in combo:
            probability *= p
        pairs.append((Config(cfg.control, tuple(w for w, _ in combo)), probability))
    return Distribution.merge_entries(pairs)


def apply_transition(m: Plcs, t: LcsTransition, cfg: Config) -> Optional[Config]:
    """Discrete effect of ``t`` on ``cfg``; ``None`` when a receive is blocked."""

    if t.kind is OpKind.NOP:
        return Config(t.dst, cfg.contents)
    i = m.channel_index(t.channel)
    words = list(cfg.contents)
    if t.kind is OpKind.SEND:
        words[i] = words[i] + t.message
    else:
        if not words[i].startswith(t.message or "\0"):
            return None
        words[i] = words[i][1:]
    return Config(t.dst, tuple(words))


def _check_config(m: Plcs, cfg: Config) -> None:
    if cfg.control not in m._outgoing:
        raise MalformedState(f"unknown control state {cfg.control!r}")
    if len(cfg.contents) != len(m.channels):
        raise MalformedState(f"configuration {cfg} does not fit channels {m.channels}")


def discrete_successors(m: Plcs, cfg: Config) -> list[tuple[LcsTransition, Config]]:
    _check_config(m, cfg)
    result = []
    for t in m.outgoing(cfg.control):
        nxt = apply_transition(m, t, cfg)
        if nxt is not None:
            result.append((t, nxt))
    return result


def plcs_step_distribution(m: Plcs, cfg: Config) -> Distribution[Config]:
    enabled = discrete_successors(m, cfg)
    if not enabled:
        raise MalformedState(f"no transition enabled at {cfg}")
    total = sum(t.weight for t, _ in enabled)
    pairs = []
    for t, nxt in enabled:
        share = Fraction(t.weight, total)
        pairs.extend((c, share * p) for c, p in loss_distribution(nxt, m.loss))
    return Distribution.merge_entries(pairs)


# ----------------------------------------------------------------------
# Backward coverability
# ----------------------------------------------------------------------
def min_pre_lcs(m: Plcs, t: LcsTransition, target_min: Config) -> Optional[Config]:
    if t.dst != target_min.control:
        return None
    if t.kind is OpKind.NOP:
        return Config(t.src, target_min.contents)
    i = m.channel_index(t.channel)
    words = list(target_min.contents)
    if t.kind is OpKind.RECV:
        words[i] = (t.message or "") + words[i]
    elif t.message and words[i].endswith(t.message):
        words[i] = words[i][:-1]
    return Config(t.src, tuple(words))


def _min_pre_step(m: Plcs, exclude: Optional[UpwardTarget[Config]] = None):
    exclusion = exclude.basis.index() if exclude is not None else None

    def step(element: Config) -> Iterator[Config]:
        for t in m.incoming(element.control):
            pre = min_pre_lcs(m, t, element)
            if pre is None:
                continue
            if exclusion is not None and exclusion.covers(pre):
                continue
            yield pre

    return step


def pre_star_lcs(
    m: Plcs, target: UpwardTarget[Config], *, limit: Optional[int] = None
) -> SaturationResult[Config]:
    return saturate_pre(target.basis, _min_pre_step(m), limit=limit)


def bottom_states(m: Plcs, pre_star_basis: Antichain[Config]) -> frozenset[str]:
    """Control states whose empty-channel configuration lies outside ``↑pre_star_basis``."""

    return frozenset(q for q in m.control_states if not pre_star_basis.covers(m.empty(q)))


@dataclass(frozen=True, slots=True)
class LcsAnalysis:
    """Backward sets shared by the deciders and the chain oracles."""

    pre_star: Antichain[Config]
    q_err: frozenset[str]
    avoid_pre_star: Antichain[Config]
    q_two: frozenset[str]


def analyse(m: Plcs, target: UpwardTarget[Config], *, limit: Optional[int] = None) -> LcsAnalysis:
    pre = pre_star_lcs(m, target, limit=limit).basis
    q_err = bottom_states(m, pre)
    avoid_pre = pre_star_lcs(m, q_target(m, q_err), limit=limit).basis
    return LcsAnalysis(pre, q_err, avoid_pre, bottom_states(m, avoid_pre))


# ----------------------------------------------------------------------
# Deciders and certificates
# ----------------------------------------------------------------------
def qual_decide(
    m: Plcs,
    init: Optional[Config],
    target: UpwardTarget[Config],
    query: QualQuery,
    *,
    limit: Optional[int] = None,
) -> TriBool:
    init = init or m.initial
    pre = pre_star_lcs(m, target, limit=limit).basis
    if query.objective is Objective.REACH and query.side is Side.ZERO:
        return TriBool.of(not pre.covers(init))

    q_err = bottom_states(m, pre)
    if query.objective is Objective.REACH:
        if target.contains(init):
            return TriBool.holds(reason="initial configuration is in F")
        seed = q_target(m, q_err)
        escape = saturate_pre(seed.basis, _min_pre_step(m, exclude=target), limit=limit).basis
        return TriBool.of(
            not escape.covers(init),
            reason="unreachable(F) can be reached while avoiding F" if escape.covers(init) else None,
        )

    avoid_pre = pre_star_lcs(m, q_target(m, q_err), limit=limit).basis
    if query.side is Side.ONE:
        return TriBool.of(not avoid_pre.covers(init))

    q_two = bottom_states(m, avoid_pre)
    doomed = pre_star_lcs(m, q_target(m, q_two), limit=limit).basis
    return TriBool.of(not doomed.covers(init))


def certificate(m: Plcs, target: str = "") -> DecisivenessCertificate:
    return DecisivenessCertificate.finite_attractor(
        "the empty-channel configurations are reached with probability 1 from every configuration",
        target,
    )


# ----------------------------------------------------------------------
# Induced chain
# ----------------------------------------------------------------------
@dataclass(frozen=True, slots=True, order=True)
class LcsState:
    config: Config
    settled: bool = True

    def __str__(self) -> str:
        return str(self.config) if self.settled else f"{self.config} (before loss)"


class PlcsChain:
    def __init__(
        self,
        model: Plcs,
        target: UpwardTarget[Config],
        *,
        initial: Optional[Config] = None,
        limit: Optional[int] = None,
    ) -> None:
        self.model = model
        self.target = target
        self._initial = LcsState(initial or model.initial, settled=False)
        self.analysis = analyse(model, target, limit=limit)
        self._target = target.basis.index()
        self._pre = self.analysis.pre_star.index()
        self._avoid_pre = self.analysis.avoid_pre_star.index()

    def initial(self) -> LcsState:
        return self._initial

    def successors(self, state: LcsState) -> Distribution[LcsState]:
        if state.settled:
            dist = plcs_step_distribution(self.model, state.config)
        else:
            dist = loss_distribution(state.config, self.model.loss)
        return Distribution(tuple((LcsState(c, True), p) for c, p in dist))

    def in_target(self, state: LcsState) -> bool:
        return self._target.covers(state.config)

    def in_avoid(self, state: LcsState) -> bool:
        if not state.settled:
            return not self._pre.covers(state.config)
        if self._target.covers(state.config):
            return False
        return not any(self._pre.covers(nxt) for _, nxt in discrete_successors(self.model, state.config))

    def in_avoid2(self, state: LcsState) -> bool:
        if not state.settled:
            return not self._avoid_pre.covers(state.config)
        if self.in_avoid(state):
            return False
        return not any(self._avoid_pre.covers(nxt) for _, nxt in discrete_successors(self.model, state.config))


__all__ = [
    "Config",
    "LcsAnalysis",
    "LcsState",
    "LcsTransition",
    "OpKind",
    "Plcs",
    "PlcsChain",
    "analyse",
    "apply_transition",
    "bottom_states",
    "certificate",
    "discrete_successors",
    "ensure_deadlock_free",
    "loss_distribution",
    "min_pre_lcs",
    "plcs_step_distribution",
    "pre_star_lcs",
    "q_target",
    "qual_decide",
    "up_target",
]
