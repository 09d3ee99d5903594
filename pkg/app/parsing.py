"""Line-oriented text formats for PVASS, PLCS and PNTM models.

One declaration per line; the first line names the model kind.  Whole-line
``#`` comments are allowed everywhere.  PVASS and PLCS files also accept
trailing ``#`` comments; PNTM files do not, since ``#`` is the blank tape
symbol there.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional, Sequence, Union

from pydantic import ValidationError

from app.core import ModelSyntaxError, ModelValidationError, as_rational
from app.models import plcs as plcs_mod
from app.models import pntm as pntm_mod
from app.models import pvass as pvass_mod
from app.models.plcs import Config, LcsTransition, OpKind, Plcs
from app.models.pntm import NtmTransition, Pntm, initial_state
from app.models.pvass import Marking, Pvass, VassTransition
from app.wqo import UpwardTarget

Model = Union[Pvass, Plcs, Pntm]
Target = Union[UpwardTarget, frozenset]

_TOKEN_RE = re.compile(r'(?:[^\s"]+|"[^"]*")+')
_NAME_RE = re.compile(r"^[A-Za-z_][\w.^']*$")
_VAR_OP_RE = re.compile(r"^([A-Za-z_]\w*)([+-])1$")
_BOUND_RE = re.compile(r"^([A-Za-z_]\w*)>=(.*)$")


class ModelKind(str, enum.Enum):
    PVASS = "pvass"
    PLCS = "plcs"
    PNTM = "pntm"


@dataclass(frozen=True, slots=True)
class Token:
    text: str
    column: int


@dataclass(frozen=True, slots=True)
class Line:
    number: int
    tokens: tuple[Token, ...]

    @property
    def keyword(self) -> str:
        return self.tokens[0].text

    @property
    def args(self) -> tuple[Token, ...]:
        return self.tokens[1:]

    def error(self, message: str, token: Optional[Token] = None) -> ModelSyntaxError:
        column = token.column if token is not None else self.tokens[0].column
        return ModelSyntaxError(message, self.number, column)

    def invalid(self, message: str, token: Optional[Token] = None) -> ModelValidationError:
        column = token.column if token is not None else self.tokens[0].column
        return ModelValidationError(message, self.number, column)


@dataclass(frozen=True)
class ModelDocument:
    kind: ModelKind
    model: Model
    target: Optional[Target] = None


# ----------------------------------------------------------------------
# Tokenising
# ----------------------------------------------------------------------
def _tokenise(text: str) -> tuple[ModelKind, list[Line]]:
    kind: Optional[ModelKind] = None
    lines: list[Line] = []
    for number, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if kind is None:
            head = stripped.split()[0]
            try:
                kind = ModelKind(head)
            except ValueError:
                raise ModelSyntaxError(
                    f"first line must name the model kind (pvass, plcs or pntm), got {head!r}",
                    number,
                    raw.index(head) + 1,
                ) from None
        if raw.count('"') % 2:
            raise ModelSyntaxError("unterminated string", number, raw.rindex('"') + 1)
        tokens: list[Token] = []
        for match in _TOKEN_RE.finditer(raw):
            chunk = match.group(0)
            if kind is not ModelKind.PNTM and chunk.startswith("#"):
                break
            tokens.append(Token(chunk.replace('"', ""), match.start() + 1))
        if tokens:
            lines.append(Line(number, tuple(tokens)))
    if kind is None:
        raise ModelSyntaxError("empty model text", 1, 1)
    return kind, lines


def _key_value(line: Line, token: Token) -> tuple[str, str]:
    key, sep, value = token.text.partition("=")
    if not sep or not key:
        raise line.error(f"expected key=value, got {token.text!r}", token)
    return key, value


def _int(line: Line, token: Token, text: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise line.error(f"expected an integer, got {text!r}", token) from None


def _rational(line: Line, token: Token, text: str) -> Fraction:
    try:
        return as_rational(text)
    except ValueError:
        raise line.error(f"expected a rational such as 1/10, got {text!r}", token) from None


def _names(line: Line) -> tuple[str, ...]:
    names = []
    for token in line.args:
        if not _NAME_RE.match(token.text):
            raise line.error(f"invalid name {token.text!r}", token)
        if token.text in names:
            raise line.invalid(f"duplicate name {token.text!r}", token)
        names.append(token.text)
    return tuple(names)


def _group(lines: Sequence[Line], allowed: Iterable[str]) -> dict[str, list[Line]]:
    allowed = set(allowed)
    grouped: dict[str, list[Line]] = {}
    for line in lines:
        if line.keyword not in allowed:
            raise line.error(f"unknown declaration {line.keyword!r}")
        grouped.setdefault(line.keyword, []).append(line)
    return grouped


def _single(grouped: dict[str, list[Line]], keyword: str, header: Line, required: bool = True) -> Optional[Line]:
    found = grouped.get(keyword, [])
    if len(found) > 1:
        raise found[1].error(f"duplicate {keyword!r} declaration")
    if not found:
        if required:
            raise header.error(f"missing {keyword!r} declaration")
        return None
    return found[0]


def _build(header: Line, factory, **fields):
    try:
        return factory(**fields)
    except ValidationError as exc:
        first = exc.errors()[0]
        message = str(first.get("msg", exc)).removeprefix("Value error, ")
        raise header.invalid(message) from None


def _state(line: Line, token: Token, states: Sequence[str]) -> str:
    if token.text not in states:
        raise line.invalid(f"undeclared control state {token.text!r}", token)
    return token.text


def _weight(line: Line, token: Token) -> int:
    weight = _int(line, token, token.text[2:])
    if weight <= 0:
        raise line.invalid("weight must be positive", token)
    return weight


# ----------------------------------------------------------------------
# PVASS
# ----------------------------------------------------------------------
def _parse_pvass(lines: list[Line], auto_selfloop: bool) -> ModelDocument:
    header, rest = lines[0], lines[1:]
    if header.args:
        raise header.error("the pvass header takes no parameters", header.args[0])
    grouped = _group(rest, {"vars", "states", "init", "trans", "target"})
    var_line = _single(grouped, "vars", header, required=False)
    variables = _names(var_line) if var_line else ()
    states = _names(_single(grouped, "states", header))
    init_line = _single(grouped, "init", header)
    assert init_line is not None

    def valuation(line: Line, tokens: Sequence[Token]) -> tuple[int, ...]:
        values = dict.fromkeys(variables, 0)
        for token in tokens:
            key, value = _key_value(line, token)
            if key not in values:
                raise line.invalid(f"undeclared variable {key!r}", token)
            values[key] = _int(line, token, value)
            if values[key] < 0:
                raise line.invalid("variables hold natural numbers", token)
        return tuple(values.values())

    if not init_line.args:
        raise init_line.error("init needs a control state")
    initial = Marking(_state(init_line, init_line.args[0], states), valuation(init_line, init_line.args[1:]))

    transitions = []
    for line in grouped.get("trans", []):
        args = line.args
        if len(args) < 3 or args[1].text != "->":
            raise line.error("expected 'trans SRC -> DST [w=N] OPS'")
        src = _state(line, args[0], states)
        dst = _state(line, args[2], states)
        weight = 1
        op = dict.fromkeys(variables, 0)
        for token in args[3:]:
            if token.text.startswith("w="):
                weight = _weight(line, token)
            elif token.text == "nop":
                continue
            else:
                match = _VAR_OP_RE.match(token.text)
                if not match:
                    raise line.error(f"expected an update such as x+1 or x-1, got {token.text!r}", token)
                if match.group(1) not in op:
                    raise line.invalid(f"undeclared variable {match.group(1)!r}", token)
                op[match.group(1)] = 1 if match.group(2) == "+" else -1
        transitions.append(VassTransition(src, tuple(op.values()), dst, weight))

    model = _build(
        header, Pvass, control_states=states, vars=variables, transitions=tuple(transitions), initial=initial
    )
    model = _repair(header, lambda: pvass_mod.ensure_deadlock_free(model, auto_selfloop=auto_selfloop))
    target = _targets(ModelKind.PVASS, model, grouped.get("target", []))
    return ModelDocument(ModelKind.PVASS, model, target)


def _pvass_element(model: Pvass, line: Line, tokens: Sequence[Token]) -> Marking:
    control = _state(line, tokens[0], model.control_states)
    values = dict.fromkeys(model.vars, 0)
    for token in tokens[1:]:
        match = _BOUND_RE.match(token.text)
        if not match:
            raise line.error(f"expected a bound such as x>=2, got {token.text!r}", token)
        if match.group(1) not in values:
            raise line.invalid(f"undeclared variable {match.group(1)!r}", token)
        values[match.group(1)] = _int(line, token, match.group(2))
    return Marking(control, tuple(values.values()))


# ----------------------------------------------------------------------
# PLCS
# ----------------------------------------------------------------------
def _parse_plcs(lines: list[Line], auto_selfloop: bool) -> ModelDocument:
    header, rest = lines[0], lines[1:]
    loss: Optional[Fraction] = None
    for token in header.args:
        key, value = _key_value(header, token)
        if key != "loss":
            raise header.error(f"unknown parameter {key!r}", token)
        loss = _rational(header, token, value)
        if not 0 < loss < 1:
            raise header.invalid("λ must satisfy 0<λ<1", token)
    if loss is None:
        raise header.error("missing loss=λ parameter")

    grouped = _group(rest, {"channels", "messages", "states", "init", "trans", "target"})
    chan_line = _single(grouped, "channels", header, required=False)
    channels = _names(chan_line) if chan_line else ()
    msg_line = _single(grouped, "messages", header, required=False)
    messages = tuple(t.text for t in msg_line.args) if msg_line else ()
    states = _names(_single(grouped, "states", header))
    init_line = _single(grouped, "init", header)
    assert init_line is not None

    if not init_line.args:
        raise init_line.error("init needs a control state")
    words = dict.fromkeys(channels, "")
    for token in init_line.args[1:]:
        key, value = _key_value(init_line, token)
        if key not in words:
            raise init_line.invalid(f"undeclared channel {key!r}", token)
        words[key] = value
    initial = Config(_state(init_line, init_line.args[0], states), tuple(words.values()))

    transitions = []
    for line in grouped.get("trans", []):
        args = line.args
        if len(args) < 3 or args[1].text != "->":
            raise line.error("expected 'trans SRC -> DST [w=N] nop|send C M|recv C M'")
        src = _state(line, args[0], states)
        dst = _state(line, args[2], states)
        weight = 1
        ops = []
        for token in args[3:]:
            if token.text.startswith("w="):
                weight = _weight(line, token)
            else:
                ops.append(token)
        if not ops or ops[0].text not in {"nop", "send", "recv"}:
            raise line.error("expected an operation: nop, send C M or recv C M", ops[0] if ops else None)
        kind = OpKind(ops[0].text)
        if kind is OpKind.NOP:
            if len(ops) != 1:
                raise line.error("nop takes no arguments", ops[1])
            transitions.append(LcsTransition(src, kind, dst, weight))
            continue
        if len(ops) != 3:
            raise line.error(f"{kind.value} needs a channel and a message", ops[0])
        if ops[1].text not in channels:
            raise line.invalid(f"undeclared channel {ops[1].text!r}", ops[1])
        if ops[2].text not in messages:
            raise line.invalid(f"undeclared message {ops[2].text!r}", ops[2])
        transitions.append(LcsTransition(src, kind, dst, weight, ops[1].text, ops[2].text))

    model = _build(
        header,
        Plcs,
        control_states=states,
        channels=channels,
        messages=messages,
        transitions=tuple(transitions),
        loss=loss,
        initial=initial,
    )
    model = _repair(header, lambda: plcs_mod.ensure_deadlock_free(model, auto_selfloop=auto_selfloop))
    target = _targets(ModelKind.PLCS, model, grouped.get("target", []))
    return ModelDocument(ModelKind.PLCS, model, target)


def _plcs_element(model: Plcs, line: Line, tokens: Sequence[Token]) -> Config:
    control = _state(line, tokens[0], model.control_states)
    words = dict.fromkeys(model.channels, "")
    for token in tokens[1:]:
        match = _BOUND_RE.match(token.text)
        if not match:
            raise line.error(f'expected a bound such as c>="ab", got {token.text!r}', token)
        if match.group(1) not in words:
            raise line.invalid(f"undeclared channel {match.group(1)!r}", token)
        words[match.group(1)] = match.group(2)
    return Config(control, tuple(words.values()))


# ----------------------------------------------------------------------
# PNTM
# ----------------------------------------------------------------------
def _parse_pntm(lines: list[Line], auto_total: bool) -> ModelDocument:
    header, rest = lines[0], lines[1:]
    epsilon: Optional[Fraction] = None
    tapes = 1
    for token in header.args:
        key, value = _key_value(header, token)
        if key == "eps":
            epsilon = _rational(header, token, value)
            if not 0 < epsilon < 1:
                raise header.invalid("ε must satisfy 0<ε<1", token)
        elif key == "tapes":
            tapes = _int(header, token, value)
            if tapes < 1:
                raise header.invalid("at least one tape is required", token)
        else:
            raise header.error(f"unknown parameter {key!r}", token)
    if epsilon is None:
        raise header.error("missing eps=ε parameter")

    grouped = _group(rest, {"gamma", "sigma", "states", "init", "trans", "target"})
    gamma_line = _single(grouped, "gamma", header)
    assert gamma_line is not None
    gamma = tuple(t.text for t in gamma_line.args)
    sigma_line = _single(grouped, "sigma", header, required=False)
    sigma = tuple(t.text for t in sigma_line.args) if sigma_line else tuple(g for g in gamma if g != pntm_mod.BLANK)
    states = _names(_single(grouped, "states", header))
    init_line = _single(grouped, "init", header)
    assert init_line is not None

    if not init_line.args:
        raise init_line.error("init needs a control state")
    contents = [""] * tapes
    heads = [0] * tapes
    for token in init_line.args[1:]:
        key, value = _key_value(init_line, token)
        match = re.match(r"^(tape|head)(\d+)$", key)
        if not match or int(match.group(2)) >= tapes:
            raise init_line.invalid(f"unknown tape field {key!r}", token)
        i = int(match.group(2))
        if match.group(1) == "tape":
            contents[i] = value
        else:
            heads[i] = _int(init_line, token, value)
            if heads[i] < 0:
                raise init_line.invalid("heads start at a non-negative position", token)
    initial = initial_state(_state(init_line, init_line.args[0], states), contents, heads)

    transitions = []
    for line in grouped.get("trans", []):
        transitions.append(_pntm_transition(line, states, tapes))

    model = _build(
        header,
        Pntm,
        control_states=states,
        input_alphabet=sigma,
        tape_alphabet=gamma,
        tapes=tapes,
        transitions=tuple(transitions),
        epsilon=epsilon,
        initial=initial,
    )
    model = _repair(header, lambda: pntm_mod.ensure_total(model, auto_total=auto_total))
    target = _targets(ModelKind.PNTM, model, grouped.get("target", []))
    return ModelDocument(ModelKind.PNTM, model, target)


_MOVES = {"+1": 1, "1": 1, "R": 1, "0": 0, "S": 0, "-1": -1, "L": -1}


def _pntm_transition(line: Line, states: Sequence[str], tapes: int) -> NtmTransition:
    args = list(line.args)
    if not args:
        raise line.error("expected 'trans SRC read .. -> DST write .. move .. [w=N]'")
    src = _state(line, args[0], states)
    weight = 1
    if args[-1].text.startswith("w="):
        weight = _weight(line, args.pop())

    def section(start_kw: str, stop_kw: Optional[str], start: int) -> tuple[list[Token], int]:
        if start >= len(args) or args[start].text != start_kw:
            raise line.error(f"expected {start_kw!r}", args[start] if start < len(args) else None)
        end = start + 1
        while end < len(args) and args[end].text != stop_kw:
            end += 1
        return args[start + 1 : end], end

    read, pos = section("read", "->", 1)
    if pos >= len(args) - 1:
        raise line.error("expected '-> DST'")
    dst = _state(line, args[pos + 1], states)
    write, pos = section("write", "move", pos + 2)
    move, pos = section("move", None, pos)
    for part, label in ((read, "read"), (write, "write"), (move, "move")):
        if len(part) != tapes:
            raise line.invalid(f"{label} needs {tapes} symbol(s)", part[0] if part else None)
    moves = []
    for token in move:
        if token.text not in _MOVES:
            raise line.error(f"moves are +1, 0 or -1, got {token.text!r}", token)
        moves.append(_MOVES[token.text])
    return NtmTransition(
        src,
        tuple(t.text for t in read),
        dst,
        tuple(t.text for t in write),
        tuple(moves),
        weight,
    )


# ----------------------------------------------------------------------
# Targets
# ----------------------------------------------------------------------
def _targets(kind: ModelKind, model: Model, lines: Sequence[Line]) -> Optional[Target]:
    if not lines:
        return None
    if kind is ModelKind.PNTM:
        chosen: set[str] = set()
        for line in lines:
            if not line.args or line.args[0].text != "q":
                raise line.error("PNTM targets are control-state sets: target q S1 S2")
            chosen.update(_state(line, t, model.control_states) for t in line.args[1:])
        return frozenset(chosen)

    q_states: set[str] = set()
    elements = []
    only_q = True
    for line in lines:
        if not line.args or line.args[0].text not in {"up", "q"}:
            raise line.error("targets are 'target up ...' or 'target q ...'")
        if line.args[0].text == "q":
            q_states.update(_state(line, t, model.control_states) for t in line.args[1:])
            continue
        only_q = False
        if len(line.args) < 2:
            raise line.error("target up needs a control state")
        if kind is ModelKind.PVASS:
            elements.append(_pvass_element(model, line, line.args[1:]))
        else:
            elements.append(_plcs_element(model, line, line.args[1:]))

    if kind is ModelKind.PVASS:
        if only_q:
            return pvass_mod.q_target(model, q_states)
        return pvass_mod.up_target([*elements, *(model.zero(q) for q in q_states)])
    if only_q:
        return plcs_mod.q_target(model, q_states)
    return plcs_mod.up_target([*elements, *(model.empty(q) for q in q_states)])


def parse_target(document: ModelDocument, text: str) -> Target:
    """Parse a target given on the command line, e.g. ``"q s1 s2"`` or ``"up s1 x>=2"``."""

    raw = "target " + text.strip()
    tokens = tuple(
        Token(m.group(0).replace('"', ""), m.start() - len("target ") + 1) for m in _TOKEN_RE.finditer(raw)
    )
    target = _targets(document.kind, document.model, [Line(1, tokens)])
    assert target is not None
    return target


# ----------------------------------------------------------------------
# Public API
# ----------------------------------------------------------------------
def _repair(header: Line, action):
    try:
        return action()
    except ModelValidationError as exc:
        if exc.line:
            raise
        raise header.invalid(exc.message) from None


def parse_document(text: str, *, auto_total: bool = False, auto_selfloop: bool = False) -> ModelDocument:
    kind, lines = _tokenise(text)
    if kind is ModelKind.PVASS:
        return _parse_pvass(lines, auto_selfloop)
    if kind is ModelKind.PLCS:
        return _parse_plcs(lines, auto_selfloop)
    return _parse_pntm(lines, auto_total)


def parse_model(text: str, *, auto_total: bool = False, auto_selfloop: bool = False) -> Model:
    return parse_document(text, auto_total=auto_total, auto_selfloop=auto_selfloop).model


def _fmt_op(variables: Sequence[str], op: Sequence[int]) -> str:
    parts = [f"{x}{'+' if d > 0 else '-'}1" for x, d in zip(variables, op) if d]
    return " ".join(parts) if parts else "nop"


def _print_target(model: Model, target: Optional[Target]) -> list[str]:
    if target is None:
        return []
    if isinstance(target, frozenset):
        return [f"target q {' '.join(sorted(target))}"]
    if target.q_states is not None:
        return [f"target q {' '.join(sorted(target.q_states))}"]
    lines = []
    for element in target.basis:
        if isinstance(element, Marking):
            bounds = [f"{x}>={v}" for x, v in zip(model.vars, element.valuation) if v]  # type: ignore[union-attr]
        else:
            bounds = [f'{c}>="{w}"' for c, w in zip(model.channels, element.contents) if w]  # type: ignore[union-attr]
        lines.append(" ".join(["target up", element.control, *bounds]))
    return lines


def print_model(model: Model, target: Optional[Target] = None) -> str:
    """Render ``model`` in its text format; ``parse_model`` reads it back unchanged."""

    out: list[str] = []
    if isinstance(model, Pvass):
        out.append("pvass")
        out.append(" ".join(["vars", *model.vars]))
        out.append(" ".join(["states", *model.control_states]))
        values = [f"{x}={v}" for x, v in zip(model.vars, model.initial.valuation)]
        out.append(" ".join(["init", model.initial.control, *values]))
        for t in model.transitions:
            out.append(f"trans {t.src} -> {t.dst} w={t.weight} {_fmt_op(model.vars, t.op)}")
    elif isinstance(model, Plcs):
        out.append(f"plcs loss={model.loss.numerator}/{model.loss.denominator}")
        out.append(" ".join(["channels", *model.channels]))
        out.append(" ".join(["messages", *model.messages]))
        out.append(" ".join(["states", *model.control_states]))
        words = [f'{c}="{w}"' for c, w in zip(model.channels, model.initial.contents)]
        out.append(" ".join(["init", model.initial.control, *words]))
        for t in model.transitions:
            op = t.kind.value if t.kind is OpKind.NOP else f"{t.kind.value} {t.channel} {t.message}"
            out.append(f"trans {t.src} -> {t.dst} w={t.weight} {op}")
    else:
        eps = model.epsilon
        out.append(f"pntm eps={eps.numerator}/{eps.denominator} tapes={model.tapes}")
        out.append(" ".join(["sigma", *model.input_alphabet]))
        out.append(" ".join(["gamma", *model.tape_alphabet]))
        out.append(" ".join(["states", *model.control_states]))
        fields = []
        for i, tape in enumerate(model.initial.tapes):
            fields.append(f'tape{i}="{tape.word}"')
            fields.append(f"head{i}={tape.head - tape.origin}")
        out.append(" ".join(["init", model.initial.control, *fields]))
        for t in model.transitions:
            moves = " ".join({1: "+1", 0: "0", -1: "-1"}[d] for d in t.moves)
            out.append(
                f"trans {t.src} read {' '.join(t.read)} -> {t.dst} "
                f"write {' '.join(t.write)} move {moves} w={t.weight}"
            )
    out.extend(_print_target(model, target))
    return "\n".join(out) + "\n"


def model_kind(model: Model) -> ModelKind:
    if isinstance(model, Pvass):
        return ModelKind.PVASS
    if isinstance(model, Plcs):
        return ModelKind.PLCS
    return ModelKind.PNTM


__all__ = [
    "ModelDocument",
    "ModelKind",
    "model_kind",
    "parse_document",
    "parse_model",
    "parse_target",
    "print_model",
]
