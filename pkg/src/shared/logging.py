"""Structured logging configuration with per-run context."""

import json
import logging
import sys
from collections.abc import Iterator
from contextlib import contextmanager
from contextvars import ContextVar
from datetime import datetime, timezone
from typing import Any

from src.config import config

_run_fields: ContextVar[dict[str, Any]] = ContextVar("run_fields")

# Attributes every LogRecord carries; anything else came in through extra=
_RESERVED_ATTRS = frozenset(logging.makeLogRecord({}).__dict__) | {"message", "asctime", "run", "run_tag"}


@contextmanager
def run_context(**fields: Any) -> Iterator[None]:
    """Tag every record logged inside the block with the given run fields (scenario, seed, q0)."""
    token = _run_fields.set({**_run_fields.get({}), **fields})
    try:
        yield
    finally:
        _run_fields.reset(token)


class RunContextFilter(logging.Filter):
    """Copies the active run fields onto ``record.run``."""

    def filter(self, record: logging.LogRecord) -> bool:
        record.run = _run_fields.get({})  # type: ignore[attr-defined]
        return True


class JSONFormatter(logging.Formatter):
    """One JSON object per record; run fields and ``extra=`` values become keys."""

    def format(self, record: logging.LogRecord) -> str:
        entry: dict[str, Any] = {
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
            "function": record.funcName,
            "line": record.lineno,
        }
        entry.update(getattr(record, "run", {}))
        for key, value in record.__dict__.items():
            if key not in _RESERVED_ATTRS and not key.startswith("_"):
                entry[key] = value
        if record.exc_info:
            entry["exception"] = self.formatException(record.exc_info)
        return json.dumps(entry, default=str)


class TextFormatter(logging.Formatter):
    """Human-readable lines; a ``[seed=.. q0=..]`` tag follows the level inside a run."""

    def __init__(self) -> None:
        super().__init__(
            fmt="%(asctime)s - %(name)s - %(levelname)s%(run_tag)s - %(message)s",
            datefmt="%Y-%m-%d %H:%M:%S",
        )

    def format(self, record: logging.LogRecord) -> str:
        fields = getattr(record, "run", {})
        record.run_tag = " [" + " ".join(f"{k}={v}" for k, v in fields.items()) + "]" if fields else ""  # type: ignore[attr-defined]
        return super().format(record)


def setup_logging() -> None:
    """Configure the root logger from settings; safe to call again in worker processes."""
    level_name = "DEBUG" if config.debug_mode else config.log_level.upper()
    level = getattr(logging, level_name, logging.INFO)

    root = logging.getLogger()
    root.setLevel(level)
    for handler in root.handlers[:]:
        root.removeHandler(handler)

    formatter: logging.Formatter = JSONFormatter() if config.log_format == "json" else TextFormatter()
    handlers: list[logging.Handler] = [logging.StreamHandler(sys.stdout)]
    file_error: OSError | None = None
    if config.log_file_path:
        try:
            handlers.append(logging.FileHandler(config.log_file_path))
        except OSError as e:
            file_error = e

    for handler in handlers:
        handler.setLevel(level)
        handler.setFormatter(formatter)
        handler.addFilter(RunContextFilter())
        root.addHandler(handler)

    if file_error is not None:
        root.error(f"Failed to set up file logging: {file_error}")

    # Quieter third-party loggers
    for name in ("PIL", "asyncio", "concurrent.futures"):
        logging.getLogger(name).setLevel(logging.WARNING)

    root.debug("Logging configured", extra={"log_level": level_name, "log_format": config.log_format})
