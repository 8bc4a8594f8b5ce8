"""Exception and warning types shared across the package.

The CLI maps ValidationError to exit code 2 and NumericFailure to exit
code 3; everything else is a genuine bug and propagates.
"""


class PnlError(Exception):
    """Base class for all package errors."""


class ValidationError(PnlError, ValueError):
    """Inputs violate a contract: bad dimension, bad config, bad file."""


class DomainError(ValidationError):
    """A value lies outside the mathematical domain of an operation."""


class NumericFailure(PnlError, FloatingPointError):
    """A computation produced NaN/Inf and cannot continue."""


class BasisDensityWarning(UserWarning):
    """A null-space basis contains entries of negligible magnitude."""


class DegenerateSpectrumWarning(UserWarning):
    """Singular-value ties make the selected subspace non-unique."""
