"""Exception types shared across the package.

The CLI maps :class:`DomainError` and :class:`ConfigurationError` to exit
code 1 and :class:`NumericError` to exit code 2.
"""


class DomainError(ValueError):
    """An argument lies outside the domain of an operation."""


class ConfigurationError(ValueError):
    """A configuration is inconsistent or cannot be satisfied."""


class ParseError(ValueError):
    """A file could not be parsed."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class SchemaError(ValueError):
    """A file parsed correctly but does not match the expected schema."""


class NumericError(ArithmeticError):
    """A numerical procedure failed to converge or produced non-finite values."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial
