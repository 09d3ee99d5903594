# app/routes/models.py

import asyncio

from fastapi import APIRouter

from app.core import CheckerError
from app.parsing import parse_document, print_model
from app.schemas import ErrorReport, ValidateRequest, ValidateResponse
from app.services.runner import describe_target, summarize

router = APIRouter(prefix="/models", tags=["Models"])


def _validate(payload: ValidateRequest) -> ValidateResponse:
    try:
        document = parse_document(
            payload.source,
            auto_total=payload.auto_total,
            auto_selfloop=payload.auto_selfloop,
        )
    except CheckerError as exc:
        return ValidateResponse(
            ok=False,
            error=ErrorReport(
                error=exc.code,
                message=getattr(exc, "message", str(exc)),
                line=getattr(exc, "line", None) or None,
                column=getattr(exc, "column", None) or None,
            ),
        )
    return ValidateResponse(
        ok=True,
        model=summarize(document),
        target=describe_target(document.target),
        printed=print_model(document.model, document.target),
    )


@router.post("/validate", response_model=ValidateResponse, response_model_exclude_none=True)
async def validate_model(payload: ValidateRequest) -> ValidateResponse:
    """Parse a model and echo its canonical text; diagnostics come back in ``error``."""

    return await asyncio.to_thread(_validate, payload)
