"""Runtime settings resolved from the environment (and an optional ``.env``)."""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from typing import Mapping, Optional

from dotenv import load_dotenv

load_dotenv()


@dataclass(frozen=True, slots=True)
class Settings:
    basis_limit: int = 1_000_000
    default_budget: int = 100_000
    km_node_limit: int = 20_000
    witness_limit: int = 20_000
    gap_cap: int = 8
    log_level: str = "INFO"
    allowed_origins: tuple[str, ...] = ()


def _int_env(env: Mapping[str, str], name: str, default: int) -> int:
    raw = env.get(name)
    if raw is None or not raw.strip():
        return default
    try:
        value = int(raw)
    except ValueError:
        return default
    return value if value > 0 else default


def load_settings(env: Mapping[str, str] = os.environ) -> Settings:
    """Build settings from ``env``; malformed values fall back to defaults."""

    raw_origins = env.get("CHECKER_ALLOWED_ORIGINS", "").strip()
    origins = tuple(o.strip() for o in raw_origins.split(",") if o.strip())
    level = (env.get("CHECKER_LOG_LEVEL") or "INFO").strip().upper()
    # getLevelNamesMapping() is 3.11+; it returns a copy of _nameToLevel.
    names = getattr(logging, "getLevelNamesMapping", lambda: dict(logging._nameToLevel))()
    if level not in names:
        level = "INFO"
    return Settings(
        basis_limit=_int_env(env, "CHECKER_BASIS_LIMIT", 1_000_000),
        default_budget=_int_env(env, "CHECKER_DEFAULT_BUDGET", 100_000),
        km_node_limit=_int_env(env, "CHECKER_KM_NODE_LIMIT", 20_000),
        witness_limit=_int_env(env, "CHECKER_WITNESS_LIMIT", 20_000),
        gap_cap=_int_env(env, "CHECKER_GAP_CAP", 8),
        log_level=level,
        allowed_origins=origins,
    )


_settings: Optional[Settings] = None


def get_settings() -> Settings:
    """Return the shared settings instance."""

    global _settings
    if _settings is None:
        _settings = load_settings()
    return _settings


def configure_logging(level: Optional[str] = None) -> None:
    logging.basicConfig(
        level=level or get_settings().log_level,
        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
    )


__all__ = ["Settings", "configure_logging", "get_settings", "load_settings"]
