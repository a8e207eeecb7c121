"""hoigraph errors."""

from typing import List, Optional


class HOIGraphError(Exception):
    """Base exception for hoigraph."""


class ConfigError(HOIGraphError, ValueError):
    """Invalid or conflicting configuration."""


class DataError(HOIGraphError, ValueError):
    """Invalid input data."""


class ParseError(DataError):
    """File does not follow the documented schema."""

    def __init__(self, message: str, field: Optional[str] = None):
        """Init error."""
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class ValidationError(DataError):
    """Data parsed but breaks a type invariant."""

    def __init__(self, message: str, violations: Optional[List] = None):
        """Init error."""
        self.violations = violations or []
        details = "; ".join(str(v) for v in self.violations)
        super().__init__(f"{message}: {details}" if details else message)


class ContractError(HOIGraphError, ValueError):
    """Operation called outside of its contract (shapes, ranges, ids)."""


class DomainError(HOIGraphError, ValueError):
    """Degenerate geometry."""


class VocabularyIndexError(HOIGraphError, IndexError):
    """Unknown vocabulary index."""


class DivergenceError(HOIGraphError, RuntimeError):
    """Training produced a non-finite loss."""


class AcceptanceError(HOIGraphError):
    """A gradient check or an acceptance threshold failed."""
