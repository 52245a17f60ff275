"""Exception and warning types shared across the package."""


class EmptyBall(ValueError):
    """Raised when a ball contains no sample points."""


class NonNegativityViolated(ValueError):
    """Raised when a functional that needs ``u >= 0`` receives negative values."""


class InadmissibleBall(ValueError):
    """Raised when a ball is not admissible for the requested domain geometry."""


class EllipticityError(ValueError):
    """Raised when a coefficient field violates the ellipticity bounds."""


class IntegrabilityWarning(UserWarning):
    """Issued when a test field is not locally integrable in the continuum."""


class ParameterRangeWarning(UserWarning):
    """Issued when exponents lie outside the range where an estimate is proven."""


class MeanProjectionWarning(UserWarning):
    """Issued when input data had its mean removed before use."""
