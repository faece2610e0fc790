"""Exception hierarchy shared across the package."""


class IRDropError(Exception):
    """Base class for all package errors."""


class ParseError(IRDropError, ValueError):
    """Input file does not follow the expected layout."""


class ValidationError(IRDropError, ValueError):
    """A value violates a documented invariant."""


class NumericError(IRDropError, ArithmeticError):
    """A numerical procedure failed (singular system, NaN loss, ...)."""


class ShapeError(IRDropError, ValueError):
    """Operands of a tensor op have incompatible shapes."""


class TapeError(IRDropError, RuntimeError):
    """Backward was requested on a graph that cannot (or can no longer) run it."""
