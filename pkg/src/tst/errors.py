"""Exception taxonomy shared across the package.

The CLI maps these onto distinct exit codes, so raise the most specific
one that applies.
"""


class ShapeError(ValueError):
    """Operands have incompatible shapes for the requested operation."""


class ConfigError(ValueError):
    """Invalid or inconsistent hyperparameter / configuration values."""


class DataError(ValueError):
    """Malformed input data (CSV rows, labels, signal lengths)."""


class TrainingAbort(RuntimeError):
    """Training was stopped because of a non-finite loss or gradient."""
