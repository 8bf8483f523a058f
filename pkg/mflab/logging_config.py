"""
Logging configuration for mflab.

Solver progress goes to stdout. Warnings and errors go to stderr, so a JSON
report printed by the CLI can be piped without interleaved diagnostics.
Python warnings raised inside numpy, scipy or scikit-learn are routed through
the same handlers under the "py.warnings" logger.
"""

import logging
import sys
from typing import Optional

from mflab.config import settings
from mflab.services.exceptions import ConfigurationError

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"
LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


class ColoredFormatter(logging.Formatter):
    """Prefixes the level name with an ANSI colour when enabled."""

    COLORS = {
        logging.DEBUG: '\033[36m',
        logging.INFO: '\033[32m',
        logging.WARNING: '\033[33m',
        logging.ERROR: '\033[31m',
        logging.CRITICAL: '\033[35m',
    }
    RESET = '\033[0m'

    def __init__(self, *args, use_colors: bool = True, **kwargs):
        super().__init__(*args, **kwargs)
        self.use_colors = use_colors

    def format(self, record: logging.LogRecord) -> str:
        colour = self.COLORS.get(record.levelno) if self.use_colors else None
        if colour is None:
            return super().format(record)
        # Copy so the other handler sees the plain level name
        tinted = logging.makeLogRecord(record.__dict__)
        tinted.levelname = f"{colour}{record.levelname}{self.RESET}"
        return super().format(tinted)


class _BelowWarningFilter(logging.Filter):
    def filter(self, record: logging.LogRecord) -> bool:
        return record.levelno < logging.WARNING


def resolve_level(log_level: Optional[str]) -> str:
    """
    Normalize a level name, falling back to settings.log_level.

    Raises:
        ConfigurationError: If the name is not a standard logging level
    """
    level = (log_level or settings.log_level).strip().upper()
    if level not in LEVELS:
        raise ConfigurationError(f"Unknown log level '{level}'; expected one of {', '.join(LEVELS)}")
    return level


def _stream_handler(stream, level: int, formatter: logging.Formatter) -> logging.StreamHandler:
    handler = logging.StreamHandler(stream)
    handler.setLevel(level)
    handler.setFormatter(formatter)
    return handler


def setup_logging(
    log_level: Optional[str] = None,
    use_colors: Optional[bool] = None
) -> None:
    """
    Configure root logging for the CLI and experiment runs.

    Args:
        log_level: DEBUG, INFO, WARNING, ERROR or CRITICAL (case-insensitive).
                   Defaults to settings.log_level.
        use_colors: Colour level names. Defaults to True only in the
                    development environment.

    Raises:
        ConfigurationError: If log_level is not a known level
    """
    level = resolve_level(log_level)
    if use_colors is None:
        use_colors = settings.environment == "development"

    formatter = ColoredFormatter(fmt=LOG_FORMAT, datefmt=DATE_FORMAT, use_colors=use_colors)
    stdout_handler = _stream_handler(sys.stdout, logging.DEBUG, formatter)
    stdout_handler.addFilter(_BelowWarningFilter())

    root_logger = logging.getLogger()
    root_logger.setLevel(level)
    root_logger.handlers[:] = [stdout_handler, _stream_handler(sys.stderr, logging.WARNING, formatter)]
    logging.captureWarnings(True)

    logging.getLogger(__name__).debug(
        f"Logging configured: level={level}, environment={settings.environment}, colors={use_colors}"
    )
