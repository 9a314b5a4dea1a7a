"""
Root logger setup: human-readable lines or JSON records.
"""
import logging
import sys
from typing import Optional

from pythonjsonlogger import jsonlogger

from .settings import get_settings

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
JSON_FORMAT = "%(asctime)s %(name)s %(levelname)s %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"


def setup_logging(level: Optional[str] = None, json_format: Optional[bool] = None) -> logging.Logger:
    """
    Configure the root logger once per call (previous handlers are replaced).

    Args:
        level: Log level name; defaults to settings.log_level
        json_format: JSON lines via python-json-logger; defaults to settings.log_json

    Returns:
        The root logger
    """
    settings = get_settings()
    level = (level or settings.log_level).upper()
    json_format = settings.log_json if json_format is None else json_format

    handler = logging.StreamHandler(sys.stderr)
    if json_format:
        handler.setFormatter(jsonlogger.JsonFormatter(JSON_FORMAT, datefmt=DATE_FORMAT))
    else:
        handler.setFormatter(logging.Formatter(LOG_FORMAT, datefmt=DATE_FORMAT))

    root = logging.getLogger()
    for existing in list(root.handlers):
        root.removeHandler(existing)
    root.addHandler(handler)
    root.setLevel(getattr(logging, level, logging.INFO))
    return root
