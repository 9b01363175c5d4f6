"""Exception hierarchy shared by every module of the package."""


class RecoilSigmaError(Exception):
    """Base class for all package errors."""


class DomainError(RecoilSigmaError, ValueError):
    """An argument lies outside the domain of the physical model."""


class ValidationError(RecoilSigmaError, ValueError):
    """Input data violate a structural invariant (lengths, ordering, signs)."""


class ConfigError(ValidationError):
    """A configuration document could not be turned into an ExperimentConfig."""

    def __init__(self, message, path=None, line=None, kind="parse"):
        self.path = path
        self.line = line
        self.kind = kind  # "parse" for syntax, key and unit problems; "range" for invalid values
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class NumericalError(RecoilSigmaError, ArithmeticError):
    """A numerical procedure failed to reach its stated tolerance."""


class QuadratureError(NumericalError):
    """Adaptive quadrature did not converge.

    Attributes
    ----------
    error_estimate : float
        Absolute error estimate achieved when the procedure gave up.
    """

    def __init__(self, message, error_estimate):
        self.error_estimate = float(error_estimate)
        super().__init__(f"{message} (achieved error estimate {self.error_estimate:.3e})")


class FitError(NumericalError):
    """A least-squares or chi-square fit failed."""


class BracketError(FitError):
    """No minimum or root could be bracketed in the allowed search range."""


class ScanCoverageError(ValidationError):
    """A fringe scan does not span a full grating period."""


class VisibilityRangeError(FitError):
    """A fitted visibility lies outside [0, 1]."""


class ConvergenceError(FitError):
    """An iterative fit hit its iteration limit."""
