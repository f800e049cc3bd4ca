"""Confidence upper-bound surfaces for Type I Error of simulable adaptive trial designs."""

from .errors import (
    CalibrationError,
    ConfigError,
    CornerCapError,
    DomainError,
    InternalError,
    TileboundError,
)

__all__ = [
    "CalibrationError",
    "ConfigError",
    "CornerCapError",
    "DomainError",
    "InternalError",
    "TileboundError",
]

__version__ = "0.1.0"
