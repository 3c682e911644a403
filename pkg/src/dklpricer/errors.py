"""Exception types raised across the package."""


class PricingError(Exception):
    """Base class for all errors raised by dklpricer."""


class InvalidConfig(PricingError, ValueError):
    pass


class NotPSD(PricingError, ArithmeticError):
    """A matrix could not be Cholesky-factorized even after jitter escalation."""


class ShapeMismatch(PricingError, ValueError):
    pass


class DomainError(PricingError, ValueError):
    pass


class UnsupportedDegree(PricingError, ValueError):
    pass


class UnsupportedDimension(PricingError, ValueError):
    pass


class EmptyPaths(PricingError, ValueError):
    pass


class TrainingDiverged(PricingError, ArithmeticError):
    pass


class InvalidAxis(PricingError, ValueError):
    pass


class DegenerateRange(RuntimeWarning):
    """Issued when a rescale dimension has max == min; that dimension maps to 0."""
