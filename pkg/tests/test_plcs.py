import itertools
import random
import sys
from fractions import Fraction
from pathlib import Path

import pytest
from pydantic import ValidationError

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.append(str(ROOT))

from app.core import (  # noqa: E402
    REACH_ONE,
    REACH_ZERO,
    REPEAT_ONE,
    REPEAT_ZERO,
    CertificateKind,
    MalformedState,
    ModelValidationError,
    validate_chain_contract,
)
from app.models.plcs import (  # noqa: E402
    Config,
    LcsState,
    LcsTransition,
    OpKind,
    Plcs,
    PlcsChain,
    bottom_states,
    certificate,
    discrete_successors,
    ensure_deadlock_free,
    loss_distribution,
    min_pre_lcs,
    plcs_step_distribution,
    pre_star_lcs,
    q_target,
    qual_decide,
    up_target,
)
from app.parsing import parse_document  # noqa: E402
from app.services.oracle import exact_reach_prob, exact_repeat_reach_prob, truncate  # noqa: E402

NOP = OpKind.NOP
SEND = OpKind.SEND
RECV = OpKind.RECV


def _plcs(states, transitions, *, channels=("c",), messages=("a", "b"), loss=Fraction(1, 2), init=None):
    return Plcs(
        control_states=tuple(states),
        channels=tuple(channels),
        messages=tuple(messages),
        transitions=tuple(transitions),
        loss=loss,
        initial=init or Config(states[0], ("",) * len(channels)),
    )


# ============================================================
# Model validation
# ============================================================

@pytest.mark.parametrize("loss", [Fraction(0), Fraction(1), Fraction(3, 2)])
def test_loss_rate_must_be_strictly_between_zero_and_one(loss):
    with pytest.raises(ValidationError, match="0<λ<1"):
        _plcs(["p"], [LcsTransition("p", NOP, "p")], loss=loss)


def test_messages_are_single_characters():
    with pytest.raises(ValidationError, match="single characters"):
        _plcs(["p"], [LcsTransition("p", NOP, "p")], messages=("ab",))


def test_undeclared_channel_is_rejected():
    with pytest.raises(ValidationError, match="undeclared channel"):
        _plcs(["p"], [LcsTransition("p", SEND, "p", 1, "d", "a")])


def test_receive_only_state_is_a_deadlock():
    m = _plcs(["p", "q"], [LcsTransition("p", RECV, "q", 1, "c", "a"), LcsTransition("q", NOP, "q")])
    with pytest.raises(ModelValidationError, match="'p' has no nop or send transition"):
        ensure_deadlock_free(m)

    repaired = ensure_deadlock_free(m, auto_selfloop=True)
    assert LcsTransition("p", NOP, "p") in repaired.transitions
    assert ensure_deadlock_free(repaired) is repaired


def test_config_helper_rejects_unknown_channels():
    m = _plcs(["p"], [LcsTransition("p", NOP, "p")])
    assert m.config("p", c="ab") == Config("p", ("ab",))
    with pytest.raises(MalformedState):
        m.config("p", d="a")


# ============================================================
# Losses and steps
# ============================================================

def test_loss_of_two_equal_messages():
    dist = loss_distribution(Config("q", ("aa",)), Fraction(1, 2)).as_dict()
    assert dist == {
        Config("q", ("aa",)): Fraction(1, 4),
        Config("q", ("a",)): Fraction(1, 2),
        Config("q", ("",)): Fraction(1, 4),
    }


def test_loss_of_two_distinct_messages():
    dist = loss_distribution(Config("q", ("ab",)), Fraction(1, 3)).as_dict()
    assert dist == {
        Config("q", ("ab",)): Fraction(4, 9),
        Config("q", ("a",)): Fraction(2, 9),
        Config("q", ("b",)): Fraction(2, 9),
        Config("q", ("",)): Fraction(1, 9),
    }


def test_loss_of_empty_channels_is_identity():
    cfg = Config("q", ("", ""))
    assert loss_distribution(cfg, Fraction(1, 5)).as_dict() == {cfg: Fraction(1)}


def _subset_losses(cfg, lam):
    positions = [(i, k) for i, word in enumerate(cfg.contents) for k in range(len(word))]
    result = {}
    for kept in itertools.product([True, False], repeat=len(positions)):
        words = ["" for _ in cfg.contents]
        probability = Fraction(1)
        for (i, k), keep in zip(positions, kept):
            if keep:
                words[i] += cfg.contents[i][k]
                probability *= 1 - lam
            else:
                probability *= lam
        key = Config(cfg.control, tuple(words))
        result[key] = result.get(key, Fraction(0)) + probability
    return result


def test_loss_distribution_matches_independent_subset_losses():
    rng = random.Random(4)
    for _ in range(200):
        channels = rng.randint(1, 3)
        budget = rng.randint(0, 8)
        lengths = [0] * channels
        for _ in range(budget):
            lengths[rng.randrange(channels)] += 1
        cfg = Config("q", tuple("".join(rng.choice("ab") for _ in range(n)) for n in lengths))
        lam = Fraction(rng.randint(1, 9), 10)
        dist = loss_distribution(cfg, lam)
        assert dist.total() == 1
        assert dist.as_dict() == _subset_losses(cfg, lam)


def test_nop_step_then_loss():
    m = _plcs(["q"], [LcsTransition("q", NOP, "q")], init=Config("q", ("a",)))
    assert plcs_step_distribution(m, Config("q", ("a",))).as_dict() == {
        Config("q", ("a",)): Fraction(1, 2),
        Config("q", ("",)): Fraction(1, 2),
    }


def test_send_from_empty_channel_may_lose_the_new_message():
    m = _plcs(["p", "r"], [LcsTransition("p", SEND, "r", 1, "c", "a"), LcsTransition("r", NOP, "r")])
    assert plcs_step_distribution(m, Config("p", ("",))).as_dict() == {
        Config("r", ("a",)): Fraction(1, 2),
        Config("r", ("",)): Fraction(1, 2),
    }


def test_weights_split_between_enabled_transitions():
    m = _plcs(
        ["p", "q1", "q2"],
        [
            LcsTransition("p", NOP, "q1", 1),
            LcsTransition("p", NOP, "q2", 3),
            LcsTransition("q1", NOP, "q1"),
            LcsTransition("q2", NOP, "q2"),
        ],
        channels=(),
        init=Config("p", ()),
    )
    assert plcs_step_distribution(m, Config("p", ())).as_dict() == {
        Config("q1", ()): Fraction(1, 4),
        Config("q2", ()): Fraction(3, 4),
    }


def test_blocked_receive_is_not_enabled():
    m = _plcs(
        ["p", "q"],
        [LcsTransition("p", RECV, "q", 5, "c", "a"), LcsTransition("p", NOP, "p"), LcsTransition("q", NOP, "q")],
    )
    assert [t.kind for t, _ in discrete_successors(m, Config("p", ("b",)))] == [NOP]
    assert [t.kind for t, _ in discrete_successors(m, Config("p", ("ab",)))] == [RECV, NOP]
    with pytest.raises(MalformedState):
        discrete_successors(m, Config("p", ("", "")))


# ============================================================
# Backward coverability
# ============================================================

def test_min_pre_of_receive_prepends_the_message():
    m = _plcs(["p", "q"], [LcsTransition("p", NOP, "p"), LcsTransition("q", NOP, "q")])
    t = LcsTransition("p", RECV, "q", 1, "c", "a")
    assert min_pre_lcs(m, t, Config("q", ("b",))) == Config("p", ("ab",))


def test_min_pre_of_send_strips_a_matching_suffix():
    m = _plcs(["p", "q"], [LcsTransition("p", NOP, "p"), LcsTransition("q", NOP, "q")])
    t = LcsTransition("p", SEND, "q", 1, "c", "a")
    assert min_pre_lcs(m, t, Config("q", ("ba",))) == Config("p", ("b",))
    assert min_pre_lcs(m, t, Config("q", ("b",))) == Config("p", ("b",))
    assert min_pre_lcs(m, t, Config("p", ("b",))) is None


def test_bottom_states_of_a_reachable_target():
    m = _plcs(["p", "q"], [LcsTransition("p", NOP, "q"), LcsTransition("q", NOP, "q")])
    pre = pre_star_lcs(m, q_target(m, {"q"})).basis
    assert bottom_states(m, pre) == frozenset()


def test_bottom_states_when_a_message_is_never_sent():
    m = _plcs(["p", "q"], [LcsTransition("p", NOP, "q"), LcsTransition("q", NOP, "q")])
    pre = pre_star_lcs(m, up_target([Config("q", ("a",))])).basis
    assert pre.covers(Config("p", ("a",)))
    assert bottom_states(m, pre) == frozenset({"p", "q"})


def test_up_target_of_empty_configs_is_a_q_state_target():
    assert up_target([Config("q", ("",))]).q_states == frozenset({"q"})
    assert up_target([Config("q", ("a",))]).q_states is None
    m = _plcs(["p"], [LcsTransition("p", NOP, "p")])
    with pytest.raises(MalformedState):
        q_target(m, {"zz"})


_LEVEL_BASES = ("p", "r")


def _leveled_lcs(rng, levels, channels):
    """Random LCS whose control state ``<base><level>`` bounds the total channel length by ``level``."""

    controls = [f"{b}{level}" for level in range(levels + 1) for b in _LEVEL_BASES]
    level_of = {q: int(q[1:]) for q in controls}
    transitions = [LcsTransition(q, NOP, f"{rng.choice(_LEVEL_BASES)}{level_of[q]}") for q in controls]
    for _ in range(rng.randint(3, 7)):
        src = rng.choice(controls)
        level = level_of[src]
        kind = rng.choice(list(OpKind))
        channel = rng.choice(channels)
        message = rng.choice("xy")
        weight = rng.randint(1, 3)
        if kind is SEND and level < levels:
            dst = f"{rng.choice(_LEVEL_BASES)}{level + 1}"
            transitions.append(LcsTransition(src, SEND, dst, weight, channel, message))
        elif kind is RECV and level > 0:
            dst = f"{rng.choice(_LEVEL_BASES)}{rng.choice([level - 1, level])}"
            transitions.append(LcsTransition(src, RECV, dst, weight, channel, message))
        else:
            transitions.append(LcsTransition(src, NOP, f"{rng.choice(_LEVEL_BASES)}{level}", weight))
    model = _plcs(
        controls,
        transitions,
        channels=channels,
        messages=("x", "y"),
        loss=rng.choice([Fraction(1, 2), Fraction(1, 3), Fraction(1, 10)]),
    )
    return model, level_of


def _words(letters, longest):
    for n in range(longest + 1):
        for chars in itertools.product(letters, repeat=n):
            yield "".join(chars)


def _bounded_configs(m, level_of):
    for q in m.control_states:
        bound = level_of[q]
        for contents in itertools.product(list(_words(m.messages, bound)), repeat=len(m.channels)):
            if sum(len(w) for w in contents) <= bound:
                yield Config(q, contents)


def _lossy_edges(m, cfg):
    edges = {nxt for _, nxt in discrete_successors(m, cfg)}
    edges.update(loss_distribution(cfg, m.loss).support())
    return edges


def _random_target(rng, m):
    control = rng.choice(m.control_states)
    if rng.random() < 0.4:
        return q_target(m, {control})
    contents = [""] * len(m.channels)
    contents[rng.randrange(len(m.channels))] = rng.choice(["", "x", "y", "xy"])
    return up_target([Config(control, tuple(contents))])


def test_pre_star_matches_backward_search_on_bounded_systems():
    rng = random.Random(11)
    for _ in range(20):
        channels = ("c",) if rng.random() < 0.5 else ("c", "d")
        m, level_of = _leveled_lcs(rng, 3, channels)
        target = _random_target(rng, m)
        configs = list(_bounded_configs(m, level_of))
        edges = {cfg: _lossy_edges(m, cfg) for cfg in configs}
        assert all(nxt in edges for succ in edges.values() for nxt in succ)

        reached = {cfg for cfg in configs if target.contains(cfg)}
        changed = True
        while changed:
            changed = False
            for cfg in configs:
                if cfg not in reached and edges[cfg] & reached:
                    reached.add(cfg)
                    changed = True

        pre = pre_star_lcs(m, target).basis
        for cfg in configs:
            assert pre.covers(cfg) == (cfg in reached), (m.transitions, target.describe(), cfg)


# ============================================================
# Qualitative deciders
# ============================================================

def test_target_covering_everything_is_reached_surely():
    m = _plcs(["q"], [LcsTransition("q", NOP, "q")])
    everything = q_target(m, {"q"})
    assert qual_decide(m, None, everything, REACH_ONE).is_holds
    assert qual_decide(m, None, everything, REACH_ZERO).is_fails
    assert qual_decide(m, None, everything, REPEAT_ONE).is_holds
    assert qual_decide(m, None, everything, REPEAT_ZERO).is_fails


def test_absorbing_target_behind_a_nop_is_reached_surely():
    m = _plcs(["p", "q"], [LcsTransition("p", NOP, "q"), LcsTransition("q", NOP, "q")])
    target = q_target(m, {"q"})
    assert qual_decide(m, None, target, REACH_ONE).is_holds
    assert qual_decide(m, None, target, REPEAT_ONE).is_holds


def test_receiving_a_message_nobody_sends_is_impossible():
    m = _plcs(
        ["p", "f"],
        [LcsTransition("p", RECV, "f", 1, "c", "a"), LcsTransition("p", NOP, "p"), LcsTransition("f", NOP, "f")],
    )
    target = q_target(m, {"f"})
    assert qual_decide(m, None, target, REACH_ZERO).is_holds
    assert qual_decide(m, None, target, REPEAT_ZERO).is_holds
    assert qual_decide(m, None, target, REACH_ONE).is_fails


def test_target_avoiding_escape_makes_reach_one_fail():
    m = _plcs(
        ["p", "f", "sink"],
        [
            LcsTransition("p", NOP, "f"),
            LcsTransition("p", NOP, "sink"),
            LcsTransition("f", NOP, "f"),
            LcsTransition("sink", NOP, "sink"),
        ],
    )
    target = q_target(m, {"f"})
    verdict = qual_decide(m, None, target, REACH_ONE)
    assert verdict.is_fails
    assert verdict.reason
    assert qual_decide(m, None, target, REACH_ZERO).is_fails


def test_sample_channel_system_is_decided():
    document = parse_document((ROOT / "samples" / "channel.plcs").read_text(encoding="utf-8"))
    m, target = document.model, document.target
    assert qual_decide(m, None, target, REACH_ONE).is_holds
    assert qual_decide(m, None, target, REPEAT_ONE).is_holds


def _qualitative_class(m, target):
    fc = truncate(PlcsChain(m, target), state_limit=5_000)
    assert fc.overflow is None
    reach, _ = exact_reach_prob(fc)
    repeat, _ = exact_repeat_reach_prob(fc)
    return reach, repeat


def test_deciders_agree_with_exact_probabilities():
    rng = random.Random(23)
    for _ in range(20):
        m, _ = _leveled_lcs(rng, 1, ("c",))
        target = _random_target(rng, m)
        reach, repeat = _qualitative_class(m, target)
        context = (m.transitions, target.describe(), reach, repeat)
        assert qual_decide(m, None, target, REACH_ONE).is_holds == (reach == 1), context
        assert qual_decide(m, None, target, REACH_ZERO).is_holds == (reach == 0), context
        assert qual_decide(m, None, target, REPEAT_ONE).is_holds == (repeat == 1), context
        assert qual_decide(m, None, target, REPEAT_ZERO).is_holds == (repeat == 0), context


# ============================================================
# Induced chain
# ============================================================

def test_initial_state_is_unsettled_and_loses_first():
    m = _plcs(["p"], [LcsTransition("p", NOP, "p")], init=Config("p", ("a",)))
    chain = PlcsChain(m, q_target(m, {"p"}))
    start = chain.initial()
    assert start == LcsState(Config("p", ("a",)), settled=False)
    assert chain.successors(start).as_dict() == {
        LcsState(Config("p", ("a",))): Fraction(1, 2),
        LcsState(Config("p", ("",))): Fraction(1, 2),
    }
    assert "before loss" in str(start)


def test_unreachable_target_puts_initial_state_in_avoid():
    m = _plcs(["p", "q"], [LcsTransition("p", NOP, "p"), LcsTransition("q", NOP, "q")])
    chain = PlcsChain(m, q_target(m, {"q"}))
    assert chain.in_avoid(chain.initial())
    assert not chain.in_target(chain.initial())


def test_plcs_chain_satisfies_contract():
    rng = random.Random(5)
    m, _ = _leveled_lcs(rng, 2, ("c",))
    chain = PlcsChain(m, _random_target(rng, m))
    fc = truncate(chain, state_limit=5_000)
    report = validate_chain_contract(chain, list(fc.states))
    assert report.ok, report.violations
    assert report.checked == len(fc)


def test_certificate_cites_the_finite_attractor():
    m = _plcs(["p"], [LcsTransition("p", NOP, "p")])
    cert = certificate(m, "Q-states {p}")
    assert cert.kind is CertificateKind.FINITE_ATTRACTOR
    assert cert.target == "Q-states {p}"
    assert "empty-channel" in cert.citation
