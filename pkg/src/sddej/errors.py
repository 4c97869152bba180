"""Exception types shared across the package.

Overflow of the plain Euler scheme is deliberately *not* an exception: a
diverging path is a result (see ``SolutionPath.overflow_flag``), not an error.
"""


class SddejError(Exception):
    """Base class for all package-specific errors."""


class InvalidParamError(SddejError, ValueError):
    """A model or scheme parameter is outside its admissible range."""


class DomainError(SddejError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class GridError(SddejError, ValueError):
    """Time grids fail to nest (step sizes are not integer multiples)."""


class NonFiniteError(SddejError, ArithmeticError):
    """A coefficient evaluation produced NaN or infinity."""


class MissingConstantError(SddejError, ValueError):
    """An assumption check needs a constant that was not supplied."""


class InsufficientDataError(SddejError, ValueError):
    """A regression or estimate is degenerate (too few or zero-valued data)."""


class ConfigError(SddejError, ValueError):
    """An experiment configuration is malformed or inconsistent."""
