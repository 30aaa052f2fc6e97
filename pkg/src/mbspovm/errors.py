"""Exception types raised across the package.

Validation failures derive from :class:`ValidationError` (a ``ValueError``) so
callers can catch them uniformly; numerical solver failures derive from
``RuntimeError``.
"""


class ValidationError(ValueError):
    """Input object violates a structural invariant."""


class NonSquareError(ValidationError):
    pass


class NonHermitianError(ValidationError):
    pass


class SingularInputError(ValidationError):
    pass


class NotRankOneError(ValidationError):
    pass


class CompletenessViolation(ValidationError):
    pass


class IndexOutOfRangeError(ValidationError):
    pass


class InvalidDimsError(ValidationError):
    pass


class ShapeMismatchError(ValidationError):
    pass


class DimensionMismatchError(ValidationError):
    pass


class MissingEntryError(ValidationError):
    pass


class EmptySettingError(ValidationError):
    pass


class NonpositiveSigmaError(ValidationError):
    pass


class ZeroStateError(ValidationError):
    pass


class ZeroTransmissionError(ValidationError):
    pass


class SolverNotConverged(RuntimeError):
    """Raised when an SDP solve ends without meeting its tolerances.

    ``residuals`` carries whatever diagnostics the solver reported.
    """

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = dict(residuals or {})


class BudgetExhaustedWarning(UserWarning):
    """Sampling budget ran out before the basis rank saturated."""


class DegenerateEstimateWarning(UserWarning):
    """A probability estimate sits on the boundary, so its propagated sigma is zero."""
