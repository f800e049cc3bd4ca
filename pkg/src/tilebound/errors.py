"""Exception types shared across the package."""


class TileboundError(Exception):
    """Base class for package errors."""


class DomainError(TileboundError, ValueError):
    """A parameter lies outside the open natural-parameter domain."""


class ConfigError(TileboundError, ValueError):
    """A run configuration failed validation."""


class InternalError(TileboundError, RuntimeError):
    """An invariant that should be unreachable was violated (e.g. stream exhaustion)."""


class CornerCapError(TileboundError, ValueError):
    """Corner enumeration requested above the supported dimension cap (2^d blowup)."""


class CalibrationError(TileboundError, RuntimeError):
    """No ladder value satisfied the calibration target."""
