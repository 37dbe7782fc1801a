"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes (see cli.main): ConfigError -> 2,
DataError and subclasses -> 3, ModelCompatibilityError -> 4, everything
else -> 5.
"""


class PropfaultError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(PropfaultError):
    """Invalid configuration, flags, or run setup."""


class DataError(PropfaultError):
    """Invalid or unusable input data."""


class SchemaError(DataError):
    """Input file does not carry the expected columns."""


class ParseError(DataError):
    """A cell in an input file could not be parsed."""


class ShortFlightError(DataError):
    """Flight is shorter than one analysis window."""


class AlignmentError(DataError):
    """Multi-stream inputs disagree in length, rate, or labeling."""


class InsufficientDataError(DataError):
    """Too few samples to fit or evaluate."""


class MissingClassError(DataError):
    """A required label class has no training rows."""


class LabelError(DataError):
    """Inconsistent or incomplete ground-truth label."""


class UndefinedMetricError(DataError):
    """Metric is undefined for the given inputs (e.g. single-class AUC)."""


class ModelCompatibilityError(PropfaultError):
    """Persisted model cannot be used with the given data or artifacts."""


class TrainingError(PropfaultError):
    """Iterative training diverged or the model is not trained."""
