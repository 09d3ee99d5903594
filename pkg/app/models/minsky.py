"""Two-counter machines and their weak simulation by a PVASS."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Union

from app.core import MalformedProgram
from app.models.pvass import Marking, Pvass, VassTransition, q_target
from app.wqo import UpwardTarget

_LOGGER = logging.getLogger(__name__)

ERR = "err"
COUNTERS = ("c1", "c2")


@dataclass(frozen=True, slots=True)
class Inc:
    counter: int
    goto: str


@dataclass(frozen=True, slots=True)
class TestDec:
    """``if c = 0 goto if_zero else (c := c - 1; goto if_nonzero)``."""

    counter: int
    if_zero: str
    if_nonzero: str


Instruction = Union[Inc, TestDec]


@dataclass(frozen=True)
class CounterProgram:
    start: str
    accept: str
    instructions: Mapping[str, Instruction] = field(default_factory=dict)

    @property
    def labels(self) -> tuple[str, ...]:
        ordered = [self.start, *self.instructions, self.accept]
        return tuple(dict.fromkeys(ordered))


def validate_program(program: CounterProgram) -> None:
    if program.accept in program.instructions:
        raise MalformedProgram(f"accepting label {program.accept!r} must not carry an instruction")
    if ERR in program.labels:
        raise MalformedProgram(f"label {ERR!r} is reserved for the error state")
    known = set(program.instructions) | {program.accept}
    if program.start not in known:
        raise MalformedProgram(f"start label {program.start!r} has no instruction")
    for label, ins in program.instructions.items():
        if ins.counter not in (1, 2):
            raise MalformedProgram(f"{label}: counter must be 1 or 2, got {ins.counter}")
        targets = (ins.goto,) if isinstance(ins, Inc) else (ins.if_zero, ins.if_nonzero)
        for target in targets:
            if target not in known:
                raise MalformedProgram(f"{label}: jump to undefined label {target!r}")
        if "^" in label:
            raise MalformedProgram(f"{label}: labels may not contain '^'")


def make_infinitely_testing(program: CounterProgram) -> CounterProgram:
    """Insert ``inc c1; test c1; dec c1`` after every instruction.

    The resulting program accepts iff the original does, and every infinite
    run performs infinitely many tests on a non-zero counter.
    """

    validate_program(program)
    rewritten: dict[str, Instruction] = {}

    def detour(label: str, branch: str, target: str) -> str:
        bump = f"{label}.{branch}.inc"
        probe = f"{label}.{branch}.test"
        rewritten[bump] = Inc(1, probe)
        rewritten[probe] = TestDec(1, target, target)
        return bump

    for label, ins in program.instructions.items():
        if isinstance(ins, Inc):
            rewritten[label] = Inc(ins.counter, detour(label, "next", ins.goto))
        else:
            rewritten[label] = TestDec(
                ins.counter,
                detour(label, "zero", ins.if_zero),
                detour(label, "dec", ins.if_nonzero),
            )
    return CounterProgram(program.start, program.accept, rewritten)


def _op(counter: int, delta: int) -> tuple[int, int]:
    return (delta, 0) if counter == 1 else (0, delta)


def build_minsky_gadget(program: CounterProgram, x_weight: tuple[int, int] = (1, 1)) -> Pvass:
    """PVASS weakly simulating ``program``; the "zero" branch weighs ``x = p/q``.

    ``x_weight = (p, q)`` gives the guessed-zero transitions weight ``p`` and
    every other transition weight ``q``.
    """

    validate_program(program)
    p, q = x_weight
    if p <= 0 or q <= 0:
        raise MalformedProgram("x must be a positive rational")
    labels = program.labels
    hatted = [f"{k}^{i}" for k in labels for i in (1, 2)]
    nop = (0, 0)

    transitions: list[VassTransition] = []
    for label, ins in program.instructions.items():
        if isinstance(ins, Inc):
            transitions.append(VassTransition(label, _op(ins.counter, 1), ins.goto, q))
        else:
            transitions.append(VassTransition(label, _op(ins.counter, -1), ins.if_nonzero, q))
            transitions.append(VassTransition(label, nop, f"{ins.if_zero}^{ins.counter}", p))
    for k in labels:
        for i in (1, 2):
            transitions.append(VassTransition(f"{k}^{i}", nop, k, q))
            transitions.append(VassTransition(f"{k}^{i}", _op(i, -1), ERR, q))
    transitions.append(VassTransition(program.accept, nop, program.accept, q))
    transitions.append(VassTransition(ERR, nop, ERR, q))

    _LOGGER.debug("Gadget for %d label(s) with x = %s", len(labels), Fraction(p, q))
    return Pvass(
        control_states=(*labels, *hatted, ERR),
        vars=COUNTERS,
        transitions=tuple(transitions),
        initial=Marking(program.start, (0, 0)),
    )


def err_target(gadget: Pvass) -> UpwardTarget[Marking]:
    return q_target(gadget, {ERR})


def immediate_accept(label: str = "k0") -> CounterProgram:
    return CounterProgram(start=label, accept=label)


def looping_tester() -> CounterProgram:
    """``k0: inc c1; k1: test c1 (never zero), dec, goto k0`` forever."""

    return CounterProgram(
        start="k0",
        accept="kacc",
        instructions={"k0": Inc(1, "k1"), "k1": TestDec(1, "kacc", "k0")},
    )


__all__ = [
    "CounterProgram",
    "ERR",
    "Inc",
    "TestDec",
    "build_minsky_gadget",
    "err_target",
    "immediate_accept",
    "looping_tester",
    "make_infinitely_testing",
    "validate_program",
]
