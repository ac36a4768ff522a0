import os
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional

from dotenv import load_dotenv

from core.errors import ConfigError

logger = logging.getLogger(__name__)

load_dotenv()

BUNDLED_CORPUS = Path(__file__).resolve().parents[1] / "data" / "corpus" / "fables.txt"
FETCHED_CORPUS = BUNDLED_CORPUS.with_name("gutenberg.txt")


def default_corpus() -> Path:
    """The downloaded Gutenberg corpus when present, else the small bundled file."""
    return FETCHED_CORPUS if FETCHED_CORPUS.exists() else BUNDLED_CORPUS


@dataclass(frozen=True)
class Settings:
    output_dir: str
    log_level: str
    corpus_path: str
    workers: int


def _env_int(name: str, default: int) -> int:
    raw = os.getenv(name)
    if raw is None or not raw.strip():
        return default
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{name} must be an integer, got {raw!r}") from None


def load_settings() -> Settings:
    """Process-wide defaults from the environment (and a .env file if present)"""
    return Settings(
        output_dir=os.getenv("PRNN_OUTPUT_DIR", "runs"),
        log_level=os.getenv("PRNN_LOG_LEVEL", "INFO").upper(),
        corpus_path=os.getenv("PRNN_CORPUS_PATH", str(default_corpus())),
        workers=max(1, _env_int("PRNN_WORKERS", 1)),
    )


settings = load_settings()


def load_config_file(path: "str | Path") -> Dict[str, str]:
    """Parse flat ``key=value`` lines; ``#`` starts a comment."""
    values: Dict[str, str] = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from e
    for number, line in enumerate(lines, start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        key, sep, value = stripped.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"{path}:{number}: expected key=value, got {line.strip()!r}")
        values[key] = value.strip()
    logger.debug(f"Loaded {len(values)} keys from {path}")
    return values


def configure_logging(level: Optional[str] = None) -> None:
    logging.basicConfig(
        level=(level or settings.log_level).upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


__all__ = [
    "Settings",
    "settings",
    "load_settings",
    "load_config_file",
    "configure_logging",
    "default_corpus",
    "BUNDLED_CORPUS",
    "FETCHED_CORPUS",
]
