"""Exception hierarchy shared by every layer; the CLI maps families to exit codes."""
from typing import Optional


class EdpceaError(Exception):
    """Base class for all edpcea errors."""


class ValidationError(EdpceaError):
    """Input violates a documented invariant."""

    def __init__(self, message: str, row: Optional[int] = None, field: Optional[str] = None):
        self.row = row
        self.field = field
        prefix = ""
        if row is not None:
            prefix += f"row {row}: "
        if field is not None:
            prefix += f"field '{field}': "
        super().__init__(prefix + message)


class ParseError(ValidationError):
    """Input could not be parsed."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class ConfigError(ValidationError):
    """Run configuration is inconsistent."""

    def __init__(self, message: str, key: Optional[str] = None):
        self.key = key
        super().__init__(f"config key '{key}': {message}" if key else message)


class ArtifactError(ValidationError):
    """A required artifact is missing or of unknown kind."""


class NumericError(EdpceaError):
    """A numerical computation produced an invalid value."""

    def __init__(self, message: str, state: Optional[dict] = None):
        self.state = state or {}
        if state:
            message = f"{message} (state: {state})"
        super().__init__(message)


class DomainError(NumericError):
    """An argument falls outside the support of a kernel, e.g. t beyond the hazard grid."""


class InvariantError(EdpceaError):
    """Internal bookkeeping is inconsistent; the run must abort."""
