"""Exception hierarchy shared by all fracmap modules."""


class FracmapError(Exception):
    """Base class for all library errors."""


class DomainError(FracmapError, ValueError):
    """Input outside the domain of an operation."""


class PoleError(DomainError):
    """Point too close to the north pole for the stereographic chart."""


class SingularityError(DomainError):
    """Kernel evaluated at zero distance."""


class UnsupportedExponent(DomainError):
    """Energy exponent outside the range an operation supports."""


class TubularViolation(DomainError):
    """Ambient vector outside the tubular neighbourhood of the target."""

    def __init__(self, message, node=None, distance=None):
        super().__init__(message)
        self.node = node
        self.distance = distance


class GlueFailure(TubularViolation):
    """A gluing construction left the tubular neighbourhood."""


class IllConditionedDegree(FracmapError):
    """Field too coarse for its variation to carry a well-defined degree."""


class ResolutionError(DomainError):
    """Mesh too coarse for the requested construction."""
