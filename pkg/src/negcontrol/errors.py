"""Exception hierarchy. The CLI maps these onto exit codes."""


class NegControlError(Exception):
    """Base class for all package errors."""


class DataError(NegControlError, ValueError):
    """Malformed input data: shapes, non-finite values, unparseable files."""


class SpecError(NegControlError, ValueError):
    """Invalid bridge, instrument, or moment specification."""


class IdentificationError(NegControlError, ArithmeticError):
    """A statistical quantity is not identified: rank deficiency, zero denominator, weak instrument."""


class SeparationError(IdentificationError):
    """Logistic regression coefficients diverge."""
