"""Exception types raised by the toolkit."""


class MusensError(Exception):
    """Base class for all toolkit errors."""


class DimensionError(MusensError, ValueError):
    """Matrix or vector shapes are empty or inconsistent."""


class DomainError(MusensError, ValueError):
    """An argument lies outside the domain where a formula is defined."""


class NumericError(MusensError, ArithmeticError):
    """Non-finite input, failed factorization, or non-convergence."""


class RangeError(MusensError, ValueError):
    """A root could not be bracketed inside the search interval."""
