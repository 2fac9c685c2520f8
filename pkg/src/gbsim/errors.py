"""Exception types shared across the package."""


class GbsimError(Exception):
    """Base class for all package errors."""


class PhysicalityError(GbsimError, ValueError):
    """A covariance matrix violates the uncertainty relation or symmetry."""


class NumericalError(GbsimError, ArithmeticError):
    """A computation failed beyond the documented roundoff tolerances."""


class FormatError(GbsimError, ValueError):
    """An input file does not follow the documented JSON schema."""
