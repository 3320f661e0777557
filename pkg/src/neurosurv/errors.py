"""Exception hierarchy shared across the package."""


class NeurosurvError(Exception):
    """Base class for package errors."""


class SchemaError(NeurosurvError, ValueError):
    """Input file does not match the expected layout."""

    def __init__(self, message, columns=()):
        super().__init__(message)
        self.columns = tuple(columns)


class DataError(NeurosurvError, ValueError):
    """A record violates a data invariant (e.g. non-positive duration)."""


class DomainError(NeurosurvError, ValueError):
    """Argument outside the support of a function."""


class ParameterError(NeurosurvError, ValueError):
    """Invalid configuration or tuning parameter."""


class PreconditionError(NeurosurvError, ValueError):
    """Operation called on input it does not accept (e.g. empty data)."""


class FitError(NeurosurvError, RuntimeError):
    """Model fitting failed for a structural reason."""


class ConvergenceError(FitError):
    """Optimizer hit its iteration cap; ``last`` holds the final iterate."""

    def __init__(self, message, last=None):
        super().__init__(message)
        self.last = last


class TrainingError(NeurosurvError, RuntimeError):
    """Classifier training diverged."""


class ResamplingError(NeurosurvError, ValueError):
    """Oversampling cannot proceed on the given labels."""
