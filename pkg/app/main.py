import logging

from dotenv import load_dotenv  # load .env variables

from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware

from app import __version__
from app.config import configure_logging, get_settings

# ----- Load environment variables -----
load_dotenv()

# ----- Logging -----
configure_logging()

# ----- Routers -----
from app.routes.models import router as models_router  # noqa: E402
from app.routes.queries import router as queries_router  # noqa: E402

# ----- FastAPI app -----
app = FastAPI(
    title="Decisive Chain Checker",
    version=__version__,
    docs_url="/docs",
    redoc_url="/redoc",
    openapi_url="/openapi.json",
)

# ----- CORS (enabled only if CHECKER_ALLOWED_ORIGINS is set) -----
allowed_origins = list(get_settings().allowed_origins)
if allowed_origins:
    app.add_middleware(
        CORSMiddleware,
        allow_origins=allowed_origins,
        allow_credentials=False,
        allow_methods=["GET", "POST", "OPTIONS"],
        allow_headers=["Content-Type", "Accept", "Origin"],
        max_age=86400,
    )

# ----- Include routers -----
app.include_router(models_router)
app.include_router(queries_router)


# ----- Health check endpoint -----
@app.get("/health", tags=["meta"])
async def health():
    return {"ok": True, "version": __version__}


logging.getLogger(__name__).info("Checker API configured (CORS origins: %d)", len(allowed_origins))
