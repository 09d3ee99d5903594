# app/routes/queries.py

import asyncio
import logging

from fastapi import APIRouter, HTTPException

from app.core import CheckerError, ModelSyntaxError, ModelValidationError
from app.schemas import QueryReport, QuerySpec
from app.services.runner import run

router = APIRouter(prefix="/queries", tags=["Queries"])

_LOGGER = logging.getLogger(__name__)


@router.post("", response_model=QueryReport, response_model_exclude_none=True)
async def run_query(spec: QuerySpec) -> QueryReport:
    """Run one query; the report matches ``checker <kind> --json``."""

    try:
        return await asyncio.to_thread(run, spec)
    except (ModelSyntaxError, ModelValidationError) as exc:
        raise HTTPException(
            status_code=400,
            detail={"error": exc.code, "message": exc.message, "line": exc.line, "column": exc.column},
        ) from exc
    except CheckerError as exc:
        _LOGGER.info("Query rejected: %s", exc)
        raise HTTPException(status_code=422, detail={"error": exc.code, "message": str(exc)}) from exc
