"""Exception hierarchy shared across the package.

Each class maps to one failure category so the CLI can translate them
into distinct exit codes.
"""

from __future__ import annotations


class DetconError(Exception):
    """Base class for all detcon-specific errors."""


class ParseError(DetconError):
    """A line of an input file could not be parsed."""

    def __init__(self, message: str, path=None, line_number: int | None = None):
        self.path = path
        self.line_number = line_number
        location = ""
        if path is not None:
            location = f"{path}"
            if line_number is not None:
                location += f":{line_number}"
            location += ": "
        super().__init__(f"{location}{message}")


class IntegrityError(DetconError):
    """Parsed data violates a structural invariant (duplicates, bad frame index)."""


class ConfigurationError(DetconError):
    """Missing or inconsistent inputs/configuration for the requested run."""


class ContractError(DetconError):
    """An internal precondition was violated; signals a bug upstream."""


class CodecError(DetconError):
    """An image encoder or decoder failed."""


class ComparisonError(DetconError):
    """Two evaluation runs cannot be compared (sequence sets or configs differ)."""
