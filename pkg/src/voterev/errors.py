"""Exception types shared across the package."""


class VoterevError(Exception):
    """Base class for all package errors."""


class ConfigError(VoterevError):
    """Malformed or inconsistent run configuration / format descriptor."""


class IngestError(VoterevError):
    """Fatal ingest failure (unknown format, missing column, duplicate ballot id)."""


class DataError(VoterevError):
    """Invariant violation in constructed tables."""


class ModelDomainError(VoterevError):
    """Closed-form model evaluated outside its validity domain."""


class BudgetError(VoterevError):
    """Exact enumeration requested beyond the configured outcome budget."""
