"""Exception hierarchy shared across the package.

Grouped by failure kind so the command line tool can map them onto exit
codes: bad input (2), failed validation (3), numerical breakdown (4).
"""


class KernelBundleError(Exception):
    """Base class for all package errors."""


class InputError(KernelBundleError):
    """Malformed arguments: bad shapes, inconsistent sampling, invalid parameters."""


class SpecError(InputError):
    """A problem specification file could not be parsed or is schematically wrong."""


class RegionError(KernelBundleError):
    """A point lies outside the domain where an object is defined."""


class ConfigurationError(KernelBundleError):
    """Parameters violate a structural requirement (e.g. mode gap too small)."""


class ValidationError(KernelBundleError):
    """A required analytic hypothesis failed on the requested set."""


class NumericalError(KernelBundleError):
    """A numerical computation could not be completed reliably."""


class ZeroOnContourError(NumericalError):
    """The integrand passes too close to a zero on the contour; move the contour."""


class ResolutionError(NumericalError):
    """Adaptive refinement hit its node budget without meeting the step criterion."""


class RankGapError(NumericalError):
    """Singular values do not separate cleanly at the rank tolerance."""

    def __init__(self, message, singular_values=None):
        super().__init__(message)
        self.singular_values = singular_values


class ReductionInvalidError(NumericalError):
    """The complement block is numerically singular; the local reduction is invalid here."""


class ClusteredPolesError(NumericalError):
    """Poles are closer than the resolvable separation; Laurent data is unavailable."""


class NondegeneracyError(NumericalError):
    """A matrix that the theory guarantees invertible is numerically degenerate."""


class SectionResidualError(NumericalError):
    """A section could not be reproduced by the frame; it is not in the kernel bundle."""


class DimensionJumpError(NumericalError):
    """The local multiplicity changed across the parameter grid."""

    def __init__(self, message, partial_report=None):
        super().__init__(message)
        self.partial_report = partial_report
