import random
import sys
from fractions import Fraction
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.append(str(ROOT))

from app.core import (  # noqa: E402
    Approx,
    Avoid2Unsupported,
    BudgetExhausted,
    InvalidEpsilon,
    alpha_bound_depth,
)
from app.models.explicit import ExplicitChain, GamblerChain, random_finite_chain  # noqa: E402
from app.models.plcs import Config, LcsTransition, OpKind, Plcs, PlcsChain, q_target  # noqa: E402
from app.models.pntm import NtmTransition, Pntm, PntmChain, certificate, initial_state  # noqa: E402
from app.models.pvass import PvassChain  # noqa: E402
from app.parsing import parse_document  # noqa: E402
from app.services.algorithms import approx_reach, approx_repeat_reach  # noqa: E402
from app.services.oracle import exact_reach_prob, exact_repeat_reach_prob, queue_trace, truncate  # noqa: E402


def _trace(run, chain, eps, budget):
    rows = []
    result = run(chain, eps, budget, trace=lambda depth, yes, no, pending: rows.append((depth, yes, no, pending)))
    return result, rows


# ============================================================
# approx_reach
# ============================================================

def test_initial_state_in_target_settles_at_depth_zero():
    chain = ExplicitChain({"a": {"a": Fraction(1)}}, "a", ["a"])
    result = approx_reach(chain, Fraction(1, 100))
    assert isinstance(result, Approx)
    assert (result.theta, result.depth, result.expansions) == (1, 0, 0)


@pytest.mark.parametrize("eps", [Fraction(0), Fraction(-1, 2), "0", "nonsense"])
def test_non_positive_or_malformed_eps_is_rejected(eps):
    with pytest.raises(InvalidEpsilon):
        approx_reach(GamblerChain(Fraction(1, 3)), eps)


def test_decisive_gambler_reaches_zero_almost_surely():
    result = approx_reach(GamblerChain(Fraction(1, 3)), Fraction(1, 100))
    assert isinstance(result, Approx)
    assert Fraction(99, 100) <= result.theta <= 1
    assert result.depth <= 1_000


def test_transient_gambler_exhausts_the_budget_below_one_half():
    result = approx_reach(GamblerChain(Fraction(2, 3)), Fraction(1, 100), 100_000)
    assert isinstance(result, BudgetExhausted)
    assert result.no == 0
    assert result.yes <= Fraction(1, 2)
    assert result.yes >= Fraction(1, 2) - Fraction(1, 1000)
    assert (result.lower, result.upper) == (result.yes, 1)


def test_zero_budget_returns_trivial_bounds():
    result = approx_reach(GamblerChain(Fraction(1, 3)), Fraction(1, 100), 0)
    assert isinstance(result, BudgetExhausted)
    assert (result.lower, result.upper, result.expansions) == (0, 1, 0)


def test_walk_sample_reaches_the_floor():
    document = parse_document((ROOT / "samples" / "walk.pvass").read_text(encoding="utf-8"))
    result = approx_reach(PvassChain(document.model, document.target), "1/100")
    assert isinstance(result, Approx)
    assert result.theta >= Fraction(99, 100)


def _random_chains(count, seed):
    rng = random.Random(seed)
    return [random_finite_chain(rng, rng.randint(3, 30)) for _ in range(count)]


def test_yes_and_no_sandwich_the_exact_probability():
    for chain in _random_chains(100, 3):
        exact, _ = exact_reach_prob(truncate(chain))
        _, rows = _trace(approx_reach, chain, Fraction(1, 10**40), 10_000)
        previous_yes = previous_no = Fraction(0)
        for depth, yes, no, pending in rows[:13]:
            assert yes + no + pending == 1
            assert yes <= exact <= 1 - no, (depth, chain.rows)
            assert yes >= previous_yes and no >= previous_no
            previous_yes, previous_no = yes, no


def test_merged_frontier_matches_per_path_enumeration():
    for chain in _random_chains(100, 8):
        reference = queue_trace(chain, 8)
        _, rows = _trace(approx_reach, chain, Fraction(1, 10**40), 10_000)
        for depth, yes, no, _ in rows[:9]:
            assert (yes, no) == reference[depth]


def test_coarse_chain_settles_within_the_certified_depth():
    gamma = ("a", "#")
    rows = []
    for src, dst in (("p", "q"), ("q", "r"), ("r", "r")):
        rows.extend(NtmTransition(src, (g,), dst, ("a",), (0,)) for g in gamma)
    m = Pntm(
        control_states=("p", "q", "r"),
        input_alphabet=("a",),
        tape_alphabet=gamma,
        tapes=1,
        transitions=tuple(rows),
        epsilon=Fraction(1, 2),
        initial=initial_state("p", ["a"]),
    )
    eps = Fraction(1, 100)
    result = approx_reach(PntmChain(m, {"r"}), eps)
    assert isinstance(result, Approx)
    assert result.theta == 1
    assert result.depth <= alpha_bound_depth(certificate(m), eps)


# ============================================================
# approx_repeat_reach
# ============================================================

def test_repeat_on_transient_gambler_returns_the_trivial_answer():
    # unreachable(F) is empty, so every state is in unreachable(unreachable(F)) and the
    # enumeration stops at depth zero; this chain is not decisive and P(repeat) is 1/2
    result = approx_repeat_reach(GamblerChain(Fraction(2, 3)), Fraction(1, 10))
    assert isinstance(result, Approx)
    assert (result.theta, result.depth) == (1, 0)


def test_repeat_is_unsupported_on_pvass_chains():
    document = parse_document((ROOT / "samples" / "walk.pvass").read_text(encoding="utf-8"))
    with pytest.raises(Avoid2Unsupported):
        approx_repeat_reach(PvassChain(document.model, document.target), Fraction(1, 10))


def test_repeat_on_channel_ping_pong_is_one():
    m = Plcs(
        control_states=("q0", "q1"),
        channels=("c",),
        messages=("a",),
        transitions=(
            LcsTransition("q0", OpKind.SEND, "q1", 1, "c", "a"),
            LcsTransition("q1", OpKind.RECV, "q0", 1, "c", "a"),
            LcsTransition("q1", OpKind.NOP, "q0"),
        ),
        loss=Fraction(1, 2),
        initial=Config("q0", ("",)),
    )
    eps = Fraction(1, 50)
    result = approx_repeat_reach(PlcsChain(m, q_target(m, {"q1"})), eps)
    assert isinstance(result, Approx)
    assert 1 - eps <= result.theta <= 1


def test_repeat_brackets_the_exact_value_on_random_chains():
    eps = Fraction(1, 1000)
    for chain in _random_chains(30, 12):
        exact, _ = exact_repeat_reach_prob(truncate(chain))
        result = approx_repeat_reach(chain, eps, 200_000)
        assert isinstance(result, Approx)
        assert result.theta <= exact <= result.theta + eps
