"""
Shared utilities for INVSEG.

This package provides:
- Runtime settings (environment / .env)
- Logging configuration
"""
from .settings import Settings, get_settings
from .logging_config import setup_logging

__all__ = ["Settings", "get_settings", "setup_logging"]
