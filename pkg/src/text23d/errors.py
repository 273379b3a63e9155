"""Shared exception types."""


class ContractViolation(ValueError):
    """An argument or state violates a documented precondition."""


class NumericError(ArithmeticError):
    """A computation produced non-finite values."""


class MissingDependencyError(RuntimeError):
    """A required upstream artifact (checkpoint, dataset) is absent."""


class CorruptArchiveError(RuntimeError):
    """A checkpoint archive failed an integrity check."""
