"""Shared exception types."""


class DisnerError(Exception):
    """Base class for all toolkit errors."""


class ParseError(DisnerError):
    """Malformed input file; carries the offending line number when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ShapeError(DisnerError):
    """Operand shapes do not conform."""


class NonFiniteError(DisnerError):
    """A numeric result contained NaN or infinity."""


class CheckpointError(DisnerError):
    """Checkpoint file is corrupt, truncated, or has the wrong version."""


class ConfigError(DisnerError):
    """Invalid configuration value or file."""
