"""Exception types shared across the pipeline."""

from typing import Any


class TagadError(Exception):
    """Base class for errors raised by tagad."""


class ConfigError(TagadError, ValueError):
    """Invalid, unknown or inconsistent configuration values."""


class DatasetError(TagadError, ValueError):
    """Malformed or invalid dataset files."""


class InjectionError(TagadError, ValueError):
    """Anomaly injection cannot proceed with the given inputs."""


class NumericError(TagadError, RuntimeError):
    """Non-finite loss or parameters during optimization.

    Attributes:
        last_good: Parameter snapshot from the last step whose values were finite
    """

    def __init__(self, message: str, last_good: dict[str, Any] | None = None):
        super().__init__(message)
        self.last_good = last_good
