import random
import sys
from fractions import Fraction
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.append(str(ROOT))

from app.core import (  # noqa: E402
    REACH_ONE,
    REACH_ZERO,
    REPEAT_ONE,
    REPEAT_ZERO,
    Avoid2Unsupported,
    ModelValidationError,
    NotQStateTarget,
    validate_chain_contract,
)
from app.models.pvass import (  # noqa: E402
    REPEAT_ZERO_OPEN,
    Marking,
    Pvass,
    PvassChain,
    VassTransition,
    best_effort_reach_downward,
    coarseness,
    control_reachable,
    decisiveness_certificate,
    ensure_deadlock_free,
    karp_miller,
    min_pre_transition,
    pre_star_upward,
    pvass_successors,
    q_target,
    qual_decide,
    up_target,
)
from app.wqo import MARKING_ORDER, Antichain  # noqa: E402


def _gambler() -> Pvass:
    return Pvass(
        control_states=("g",),
        vars=("x",),
        transitions=(
            VassTransition("g", (1,), "g", 2),
            VassTransition("g", (-1,), "g", 1),
        ),
        initial=Marking("g", (1,)),
    )


def _two_state(*extra: VassTransition, vars=("x",)) -> Pvass:
    zero = (0,) * len(vars)
    return Pvass(
        control_states=("a", "b"),
        vars=vars,
        transitions=(VassTransition("a", zero, "b"), VassTransition("b", zero, "b"), *extra),
        initial=Marking("a", zero),
    )


# ----------------------------------------------------------------------
# Structure and semantics
# ----------------------------------------------------------------------
def test_successors_normalise_enabled_weights():
    m = _gambler()
    assert pvass_successors(m, Marking("g", (1,))).as_dict() == {
        Marking("g", (2,)): Fraction(2, 3),
        Marking("g", (0,)): Fraction(1, 3),
    }
    assert pvass_successors(m, Marking("g", (0,))).as_dict() == {Marking("g", (1,)): Fraction(1)}


def test_successors_merge_parallel_transitions():
    m = Pvass(
        control_states=("a", "b"),
        vars=(),
        transitions=(VassTransition("a", (), "b"), VassTransition("a", (), "b"), VassTransition("b", (), "b")),
        initial=Marking("a", ()),
    )
    assert pvass_successors(m, Marking("a", ())).as_dict() == {Marking("b", ()): Fraction(1)}


def test_structure_is_validated():
    with pytest.raises(ValueError):
        Pvass(control_states=("a",), vars=("x",), transitions=(VassTransition("a", (2,), "a"),), initial=Marking("a", (0,)))
    with pytest.raises(ValueError):
        Pvass(control_states=("a",), vars=("x",), transitions=(VassTransition("a", (0,), "z"),), initial=Marking("a", (0,)))
    with pytest.raises(ValueError):
        Pvass(control_states=("a", "a"), vars=(), transitions=(), initial=Marking("a", ()))


def test_deadlock_check_and_repair():
    m = Pvass(
        control_states=("a",),
        vars=("x",),
        transitions=(VassTransition("a", (-1,), "a"),),
        initial=Marking("a", (3,)),
    )
    with pytest.raises(ModelValidationError) as excinfo:
        ensure_deadlock_free(m)
    assert "'a'" in excinfo.value.message
    repaired = ensure_deadlock_free(m, auto_selfloop=True)
    assert VassTransition("a", (0,), "a", 1) in repaired.transitions
    assert ensure_deadlock_free(repaired) is repaired


def test_control_reachable():
    m = _two_state()
    assert control_reachable(m) == frozenset({"a", "b"})
    assert control_reachable(m, Marking("b", (0,))) == frozenset({"b"})


# ----------------------------------------------------------------------
# Backward coverability
# ----------------------------------------------------------------------
def test_min_pre_transition_examples():
    m = _two_state(VassTransition("a", (1,), "b"), VassTransition("a", (-1,), "b"))
    inc, dec = m.transitions[2], m.transitions[3]
    assert min_pre_transition(m, inc, Marking("b", (3,))) == Marking("a", (2,))
    assert min_pre_transition(m, dec, Marking("b", (0,))) == Marking("a", (1,))
    assert min_pre_transition(m, inc, Marking("a", (0,))) is None


def test_pre_star_gambler():
    result = pre_star_upward(_gambler(), up_target([Marking("g", (2,))]))
    assert result.basis.elements == (Marking("g", (0,)),)
    assert result.rounds == 2


def test_pre_star_of_everything_is_immediate():
    m = _two_state()
    result = pre_star_upward(m, q_target(m, {"a", "b"}))
    assert set(result.basis) == {Marking("a", (0,)), Marking("b", (0,))}
    assert result.rounds == 0


def test_pre_star_one_backward_step():
    m = _two_state()
    result = pre_star_upward(m, up_target([Marking("b", (0,))]))
    assert set(result.basis) == {Marking("a", (0,)), Marking("b", (0,))}
    assert result.rounds == 1


def _random_conserving_pvass(rng: random.Random) -> Pvass:
    states = tuple(f"q{i}" for i in range(rng.randint(2, 3)))
    moves = [(1, -1), (-1, 1), (0, 0)]
    transitions = [VassTransition(q, (0, 0), q, 1) for q in states]
    for _ in range(rng.randint(2, 6)):
        transitions.append(
            VassTransition(rng.choice(states), rng.choice(moves), rng.choice(states), rng.randint(1, 3))
        )
    return Pvass(control_states=states, vars=("x", "y"), transitions=tuple(transitions), initial=Marking(states[0], (0, 0)))


def test_pre_star_agrees_with_brute_force_backward_reachability():
    rng = random.Random(2024)
    for _ in range(50):
        m = _random_conserving_pvass(rng)
        # x + y is invariant, so markings with x + y <= 5 form a closed subgraph
        bounded = [Marking(q, (x, y)) for q in m.control_states for x in range(6) for y in range(6 - x)]
        basis = [
            Marking(rng.choice(m.control_states), (rng.randint(0, 3), rng.randint(0, 2)))
            for _ in range(rng.randint(1, 2))
        ]
        target = up_target(basis)
        reach = {s for s in bounded if target.contains(s)}
        changed = True
        while changed:
            changed = False
            for s in bounded:
                if s not in reach and any(succ in reach for succ in pvass_successors(m, s).support()):
                    reach.add(s)
                    changed = True
        pre = pre_star_upward(m, target).basis
        assert {s for s in bounded if pre.covers(s)} == reach


# ----------------------------------------------------------------------
# Forward analysis
# ----------------------------------------------------------------------
def test_downward_reach_of_whole_space_holds_immediately():
    m = _gambler()
    verdict = best_effort_reach_downward(m, Marking("g", (4,)), Antichain(MARKING_ORDER))
    assert verdict.is_holds
    assert len(verdict.evidence) == 0


def test_unreachable_control_state_fails_with_coverability_certificate():
    m = Pvass(
        control_states=("p", "q"),
        vars=("x",),
        transitions=(VassTransition("p", (1,), "p"), VassTransition("q", (0,), "q")),
        initial=Marking("p", (0,)),
    )
    avoid = Antichain.of(MARKING_ORDER, [Marking("p", (0,))])
    verdict = best_effort_reach_downward(m, m.initial, avoid, witness_limit=50)
    assert verdict.is_fails
    assert verdict.evidence.kind == "karp-miller"


def test_gambler_reaches_floor_in_one_step():
    avoid = Antichain.of(MARKING_ORDER, [Marking("g", (1,))])
    verdict = best_effort_reach_downward(_gambler(), Marking("g", (1,)), avoid)
    assert verdict.is_holds
    assert verdict.evidence.path == (Marking("g", (1,)), Marking("g", (0,)))
    assert len(verdict.evidence) == 1


def test_finite_reachable_set_is_enumerated():
    m = _two_state()
    avoid = Antichain.of(MARKING_ORDER, [Marking("a", (0,)), Marking("b", (0,))])
    verdict = best_effort_reach_downward(m, m.initial, avoid)
    assert verdict.is_fails


def test_karp_miller_accelerates_pumps():
    tree = karp_miller(_gambler(), Marking("g", (0,)))
    assert tree.complete
    assert tree.has_omega
    bounded = karp_miller(_two_state())
    assert bounded.complete and not bounded.has_omega
    assert bounded.control_states() == frozenset({"a", "b"})


def test_karp_miller_respects_node_limit():
    tree = karp_miller(_gambler(), Marking("g", (0,)), node_limit=2)
    assert not tree.complete


# ----------------------------------------------------------------------
# Deciders and certificates
# ----------------------------------------------------------------------
def test_reach_zero_when_control_graph_misses_target():
    m = Pvass(
        control_states=("p", "q"),
        vars=(),
        transitions=(VassTransition("p", (), "p"), VassTransition("q", (), "q")),
        initial=Marking("p", ()),
    )
    assert qual_decide(m, None, q_target(m, {"q"}), REACH_ZERO).is_holds
    assert qual_decide(m, None, q_target(m, {"q"}), REACH_ONE).is_fails


def test_reach_one_when_target_is_everything():
    m = _gambler()
    assert qual_decide(m, None, q_target(m, {"g"}), REACH_ONE).is_holds


def test_reach_one_two_state_chain():
    m = _two_state()
    assert qual_decide(m, None, q_target(m, {"b"}), REACH_ONE).is_holds
    assert qual_decide(m, None, q_target(m, {"b"}), REPEAT_ONE).is_holds


def test_reach_one_rejects_general_upward_targets():
    m = _gambler()
    with pytest.raises(NotQStateTarget):
        qual_decide(m, None, up_target([Marking("g", (2,))]), REACH_ONE)


def test_repeat_zero_is_reported_unknown():
    m = _gambler()
    verdict = qual_decide(m, None, q_target(m, {"g"}), REPEAT_ZERO)
    assert verdict.is_unknown
    assert verdict.reason == REPEAT_ZERO_OPEN


def test_gambler_certificate():
    m = _gambler()
    assert coarseness(m) == Fraction(1, 3)
    cert = decisiveness_certificate(m, up_target([Marking("g", (2,))]))
    assert (cert.beta, cert.span, cert.alpha) == (Fraction(1, 3), 2, Fraction(1, 9))


def test_deterministic_model_has_unit_alpha():
    m = _two_state()
    cert = decisiveness_certificate(m, up_target([Marking("b", (0,))]))
    assert cert.beta == 1 and cert.alpha == 1


def test_chain_oracles():
    m = _gambler()
    chain = PvassChain(m, up_target([Marking("g", (2,))]))
    assert chain.in_target(Marking("g", (3,)))
    assert not chain.in_avoid(Marking("g", (0,)))
    with pytest.raises(Avoid2Unsupported):
        chain.in_avoid2(chain.initial())
    samples = [Marking("g", (v,)) for v in range(6)]
    assert validate_chain_contract(chain, samples).ok


def test_every_probability_respects_coarseness():
    rng = random.Random(5)
    for _ in range(10):
        m = _random_conserving_pvass(rng)
        beta = coarseness(m)
        for q in m.control_states:
            for v in [(0, 0), (1, 0), (0, 1), (2, 3)]:
                assert all(p >= beta for _, p in pvass_successors(m, Marking(q, v)))
