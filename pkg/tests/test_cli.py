import io
import json
import sys
from pathlib import Path

import pytest
from pydantic import ValidationError

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.append(str(ROOT))

from app import cli  # noqa: E402
from app.core import QueryError  # noqa: E402
from app.schemas import Outcome, QueryKind, QuerySpec  # noqa: E402
from app.services.runner import run  # noqa: E402

SAMPLES = ROOT / "samples"


def _source(name):
    return (SAMPLES / name).read_text(encoding="utf-8")


def _main(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = cli.main(list(argv), out=out, err=err)
    return code, out.getvalue(), err.getvalue()


# ============================================================
# Query specs
# ============================================================

@pytest.mark.parametrize(
    "fields",
    [
        {"kind": "approx-reach"},
        {"kind": "validate", "eps": "1/10"},
        {"kind": "qual-reach"},
        {"kind": "certify", "side": "one"},
        {"kind": "approx-reach", "eps": "1/0"},
        {"kind": "approx-reach", "eps": "3/2"},
        {"kind": "approx-reach", "eps": "0"},
        {"kind": "validate", "target": "q a\nq b"},
        {"kind": "validate", "colour": "red"},
    ],
)
def test_inconsistent_specs_are_rejected(fields):
    with pytest.raises(ValidationError):
        QuerySpec(source="pvass", **fields)


def test_eps_is_normalised_to_lowest_terms():
    spec = QuerySpec(source="pvass", kind="approx-reach", eps="2/200")
    assert spec.eps == "1/100"
    assert spec.kind.is_approximate


# ============================================================
# Runner
# ============================================================

def test_validate_summarises_the_model():
    report = run(QuerySpec(source=_source("channel.plcs"), kind=QueryKind.VALIDATE))
    assert report.outcome is Outcome.VALID
    assert report.model.kind == "plcs"
    assert report.model.control_states == 3
    assert report.model.details["loss"] == "1/10"
    assert report.exit_code == 0


def test_walk_reaches_the_floor_almost_surely():
    report = run(QuerySpec(source=_source("walk.pvass"), kind="qual-reach", side="one"))
    assert report.outcome is Outcome.DECIDED
    assert report.verdict == "holds"


def test_repeat_zero_on_pvass_is_unknown():
    report = run(QuerySpec(source=_source("walk.pvass"), kind="qual-repeat", side="zero"))
    assert report.outcome is Outcome.UNKNOWN
    assert report.verdict == "unknown"
    assert "not known to be decidable" in report.reason
    assert report.exit_code == 2


def test_approx_reach_on_walk():
    report = run(QuerySpec(source=_source("walk.pvass"), kind="approx-reach", eps="1/100"))
    assert report.outcome is Outcome.COMPUTED
    theta = report.theta.exact
    numerator, _, denominator = theta.partition("/")
    assert int(numerator) * 100 >= 99 * int(denominator or 1)
    assert report.lower == report.theta


def test_zero_budget_is_reported_as_exhausted():
    report = run(QuerySpec(source=_source("walk.pvass"), kind="approx-reach", eps="1/100", budget=0))
    assert report.outcome is Outcome.BUDGET_EXHAUSTED
    assert (report.lower.exact, report.upper.exact) == ("0/1", "1/1")
    assert report.exit_code == 2


def test_noisy_machine_certificate():
    report = run(QuerySpec(source=_source("noisy.pntm"), kind="certify"))
    cert = report.certificate
    assert cert.beta.exact == "1/30"
    assert cert.span == 2
    assert cert.alpha.exact == "1/900"


def test_oracle_on_walk_with_a_counter_bound():
    report = run(QuerySpec(source=_source("walk.pvass"), kind="oracle", bound=5))
    oracle = report.oracle
    assert oracle.overflow
    assert oracle.bound == 5
    assert oracle.reach.lower.exact == "728/729"
    assert oracle.reach.upper.exact == "1/1"


def test_simulation_report_is_reproducible():
    spec = QuerySpec(source=_source("walk.pvass"), kind="simulate", runs=200, horizon=100, seed=3)
    first, again = run(spec), run(spec)
    assert first.simulation.generator == "PCG64"
    assert first.simulation.successes == 200
    assert first.deterministic_json() == again.deterministic_json()
    assert "timing" not in json.loads(first.deterministic_json())


def test_target_override_replaces_the_declared_target():
    report = run(QuerySpec(source=_source("counter.pvass"), kind="qual-reach", side="zero", target="q s1"))
    assert report.target == "Q-states {s1}"
    assert report.verdict == "fails"


def test_certificate_can_ride_along():
    report = run(QuerySpec(source=_source("channel.plcs"), kind="qual-reach", side="one", with_certificate=True))
    assert report.certificate is not None
    assert report.verdict == "holds"


def test_query_without_a_target_is_an_error():
    source = "pvass\nstates s\ninit s\ntrans s -> s nop\n"
    assert run(QuerySpec(source=source, kind="validate")).target is None
    with pytest.raises(QueryError, match="no target"):
        run(QuerySpec(source=source, kind="certify"))


# ============================================================
# Command line
# ============================================================

def test_cli_approx_reach_text_output():
    code, out, _ = _main("approx-reach", str(SAMPLES / "walk.pvass"), "--eps", "1/100")
    assert code == cli.EXIT_OK
    assert out.startswith("approx-reach: computed")
    assert "theta:" in out


def test_cli_unknown_verdict_exits_two():
    code, out, _ = _main("qual-repeat", str(SAMPLES / "counter.pvass"), "--side", "zero", "--json")
    assert code == cli.EXIT_UNDECIDED
    assert json.loads(out)["verdict"] == "unknown"


def test_cli_certify_json():
    code, out, _ = _main("certify", str(SAMPLES / "noisy.pntm"), "--json")
    assert code == cli.EXIT_OK
    report = json.loads(out)
    assert report["certificate"]["beta"]["exact"] == "1/30"
    assert "timing" in report


def test_cli_reports_syntax_errors_with_a_position(tmp_path):
    bad = tmp_path / "bad.pvass"
    bad.write_text("pvass\nstates s\ninit s\ntrans s -> u nop\n", encoding="utf-8")
    code, out, err = _main("validate", str(bad))
    assert code == cli.EXIT_ERROR
    assert out == ""
    assert err.strip() == "error [model_validation_error] (line 4, column 12): undeclared control state 'u'"


def test_cli_missing_file_is_an_io_error(tmp_path):
    code, out, _ = _main("validate", str(tmp_path / "absent.pvass"), "--json")
    assert code == cli.EXIT_ERROR
    assert json.loads(out)["error"] == "io_error"


def test_cli_bad_eps_is_a_query_error():
    code, _, err = _main("approx-reach", str(SAMPLES / "walk.pvass"), "--eps", "2")
    assert code == cli.EXIT_ERROR
    assert "error [query_error]" in err
    assert "0<eps<1" in err


def test_cli_requires_a_side_for_qualitative_queries():
    with pytest.raises(SystemExit):
        _main("qual-reach", str(SAMPLES / "walk.pvass"))
