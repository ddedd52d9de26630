"""Exception hierarchy shared by every ttcrit module."""


class TTCritError(Exception):
    """Base class for all errors raised by ttcrit."""


class ShapeError(TTCritError, ValueError):
    """Operand shapes or mode sizes do not agree."""


class ValidationError(TTCritError, ValueError):
    """Input data violates a documented precondition."""


class CapacityError(TTCritError, MemoryError):
    """A dense object would exceed the configured size cap."""


class UnsupportedError(TTCritError, NotImplementedError):
    """The requested combination of options is not supported."""


class SolverError(TTCritError, RuntimeError):
    """A numerical kernel failed (singular local system, breakdown)."""


class ConvergenceError(TTCritError, RuntimeError):
    """An iteration hit its cap before meeting the tolerance.

    The best iterate and the iteration history are attached so callers can
    still report partial results.
    """

    def __init__(self, message, best=None, history=None, residual=None):
        super().__init__(message)
        self.best = best
        self.history = history if history is not None else []
        self.residual = residual


class NoFissionError(ValidationError):
    """The fission operator is identically zero."""


class StagnationError(ConvergenceError):
    """Secant update denominator vanished."""
