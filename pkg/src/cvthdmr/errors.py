"""Exception types raised across the package."""


class ParameterError(ValueError):
    """Invalid argument value or shape."""


class PreconditionError(ValueError):
    """An operation was called on input it cannot handle (e.g. an empty set)."""


class DomainError(ValueError):
    """A model was evaluated outside its mathematical domain."""


class UnsupportedMethodError(ValueError):
    """The requested numerical method does not apply to this input."""


class ConvergenceError(RuntimeError):
    """An iterative solver hit its iteration cap.

    ``history`` holds whatever residual trace the solver kept.
    """

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history) if history is not None else []


class OracleError(RuntimeError):
    """The model oracle failed; ``point`` is the offending input."""

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class LoadError(ValueError):
    """A persisted document could not be read; ``location`` says where."""

    def __init__(self, message, location=None):
        super().__init__(f"{message} (at {location})" if location else message)
        self.location = location
