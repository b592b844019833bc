"""Exception types shared across the package."""


class BnbpError(Exception):
    """Base class for library errors."""


class ParameterError(BnbpError, ValueError):
    """A process or distribution parameter is outside its valid range."""


class DomainError(BnbpError, ValueError):
    """Input data is outside the domain of an operation."""


class NumericError(BnbpError, ArithmeticError):
    """A numerical routine failed to converge or produced a non-finite value."""


class DivergenceError(NumericError):
    """The requested expectation is infinite for the given parameters."""


class SingularityError(DomainError):
    """A transformation hit a pole, e.g. a beta-process weight equal to one."""


class DataError(BnbpError, ValueError):
    """A corpus or stored-sample file is malformed."""
