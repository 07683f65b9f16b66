"""Exception hierarchy shared by the library and the CLI."""


class IsingError(Exception):
    """Base class for all errors raised by fastising."""

    kind = "error"


class ConfigurationError(IsingError, ValueError):
    kind = "configuration"


class InputError(IsingError, ValueError):
    kind = "input"


class NumericalDomainError(IsingError, ArithmeticError):
    kind = "numerical-domain"


class DataError(IsingError, ValueError):
    kind = "data"
