import asyncio
import sys
from pathlib import Path

import pytest
from fastapi import HTTPException

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.append(str(ROOT))

from app.main import app, health  # noqa: E402
from app.routes.models import validate_model  # noqa: E402
from app.routes.queries import run_query  # noqa: E402
from app.schemas import Outcome, QuerySpec, ValidateRequest  # noqa: E402

WALK = (ROOT / "samples" / "walk.pvass").read_text(encoding="utf-8")


def test_routes_are_mounted():
    paths = {route.path for route in app.routes}
    assert {"/health", "/models/validate", "/queries"} <= paths


def test_health_reports_version():
    body = asyncio.run(health())
    assert body["ok"] is True
    assert body["version"]


def test_validate_echoes_the_canonical_text():
    response = asyncio.run(validate_model(ValidateRequest(source=WALK)))
    assert response.ok
    assert response.model.kind == "pvass"
    assert response.target == "Q-states {floor}"
    assert response.printed.startswith("pvass")
    assert response.error is None


def test_validate_returns_diagnostics_instead_of_raising():
    response = asyncio.run(validate_model(ValidateRequest(source="pvass\nstates s\ninit s\ntrans s -> u nop\n")))
    assert not response.ok
    assert response.error.error == "model_validation_error"
    assert (response.error.line, response.error.column) == (4, 12)


def test_query_report_matches_the_runner():
    report = asyncio.run(run_query(QuerySpec(source=WALK, kind="certify")))
    assert report.outcome is Outcome.COMPUTED
    assert report.certificate is not None


def test_malformed_model_is_a_bad_request():
    with pytest.raises(HTTPException) as excinfo:
        asyncio.run(run_query(QuerySpec(source="petri\n", kind="validate")))
    assert excinfo.value.status_code == 400
    assert excinfo.value.detail["error"] == "model_syntax_error"
    assert excinfo.value.detail["line"] == 1


def test_unsupported_query_is_unprocessable():
    source = "pvass\nstates s\ninit s\ntrans s -> s nop\n"
    with pytest.raises(HTTPException) as excinfo:
        asyncio.run(run_query(QuerySpec(source=source, kind="simulate", runs=10)))
    assert excinfo.value.status_code == 422
    assert excinfo.value.detail["error"] == "query_error"
