"""Exception types shared across the package."""


class ExtremileError(Exception):
    """Base class for all package errors."""


class DomainError(ExtremileError, ValueError):
    """A parameter or argument lies outside its admissible range."""


class ParseError(ExtremileError, ValueError):
    """A text token, config file or CSV file could not be parsed."""


class DivergenceError(ExtremileError, ArithmeticError):
    """A quadrature did not settle under refinement."""


class BreakdownError(ExtremileError, ArithmeticError):
    """All empirical weights vanished, so the estimator is undefined."""


class NoMinimumError(ExtremileError, ArithmeticError):
    """The grid search found no point satisfying the slope test."""


class UnsupportedError(ExtremileError, NotImplementedError):
    """The requested operation is not available for this loss or distortion."""


class DegenerateSlopeError(ExtremileError, ArithmeticError):
    """The population slope at the target vanished numerically."""
