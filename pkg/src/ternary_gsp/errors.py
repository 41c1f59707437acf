"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes: ParseError -> 1, ValidationError and
its subclasses -> 2, UnsupportedGraphError -> 3.
"""


class TernaryError(Exception):
    pass


class ParseError(TernaryError, ValueError):
    """Malformed text input. ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(TernaryError, ValueError):
    pass


class DimensionError(ValidationError):
    """Shape mismatch between operands."""


class RangeError(ValidationError):
    """An index lies outside its declared extent."""


class GeometryError(ValidationError):
    """Convolution geometry yields no output positions."""


class DegenerateNeighborhoodError(ValidationError):
    def __init__(self, vertices):
        self.vertices = list(vertices)
        super().__init__(f"empty attention neighborhood for vertices {self.vertices}")


class CapacityError(TernaryError, MemoryError):
    """A dense materialization would exceed the configured element budget."""


class ConvergenceError(TernaryError, RuntimeError):
    def __init__(self, message, estimate):
        self.estimate = estimate
        super().__init__(f"{message} (last estimate {estimate!r})")


class UnsupportedGraphError(TernaryError):
    """The operation needs an undirected graph."""
