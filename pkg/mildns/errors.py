"""Exception hierarchy shared by every mildns module."""


class MildNSError(Exception):
    """Base class for all errors raised by mildns."""


class GridMismatchError(MildNSError, ValueError):
    """Fields or sample arrays do not live on the same spectral grid."""


class ZeroModeError(MildNSError, ValueError):
    """A homogeneous operator was applied to a field with a nonzero mean."""


class DivergenceError(MildNSError, ValueError):
    """A field flagged divergence-free violates the divergence tolerance."""


class ExponentWindowError(MildNSError, ValueError):
    """An exponent tuple falls outside the hypothesis window of an estimate.

    The message always names the violated inequality.
    """


class EmptyInputError(MildNSError, ValueError):
    """An operation received an empty trajectory or corpus."""


class ConfigError(MildNSError, ValueError):
    """Malformed or unknown configuration entry."""

    def __init__(self, message: str, line: int = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NumericalBlowupError(MildNSError, FloatingPointError):
    """NaN or infinite values appeared in a field."""


class OracleInstabilityError(NumericalBlowupError):
    """The reference time stepper grew beyond its stability bound."""


class ParameterError(MildNSError, ValueError):
    """An operator parameter is outside its admissible range."""
