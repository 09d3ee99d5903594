import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.append(str(ROOT))

import app.config as config  # noqa: E402
from app.config import Settings, load_settings  # noqa: E402


def test_defaults_when_environment_is_empty():
    assert load_settings({}) == Settings()


def test_values_are_read_from_environment():
    settings = load_settings(
        {
            "CHECKER_BASIS_LIMIT": "500",
            "CHECKER_DEFAULT_BUDGET": "42",
            "CHECKER_GAP_CAP": "3",
            "CHECKER_LOG_LEVEL": "debug",
            "CHECKER_ALLOWED_ORIGINS": "http://a.example, http://b.example ,",
        }
    )
    assert settings.basis_limit == 500
    assert settings.default_budget == 42
    assert settings.gap_cap == 3
    assert settings.log_level == "DEBUG"
    assert settings.allowed_origins == ("http://a.example", "http://b.example")


def test_malformed_values_fall_back_to_defaults():
    settings = load_settings(
        {
            "CHECKER_BASIS_LIMIT": "lots",
            "CHECKER_DEFAULT_BUDGET": "-5",
            "CHECKER_KM_NODE_LIMIT": "   ",
            "CHECKER_LOG_LEVEL": "chatty",
        }
    )
    assert settings.basis_limit == 1_000_000
    assert settings.default_budget == 100_000
    assert settings.km_node_limit == 20_000
    assert settings.log_level == "INFO"


def test_get_settings_is_cached(monkeypatch):
    monkeypatch.setattr(config, "_settings", None)
    first = config.get_settings()
    assert config.get_settings() is first
