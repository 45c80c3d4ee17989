"""Exception hierarchy for brokenflow."""


class BrokenflowError(Exception):
    """Base class for all library errors."""


class InvalidSubspace(BrokenflowError):
    """A basis is rank deficient or an implicit lattice member was listed."""


class DimensionMismatch(BrokenflowError):
    """Inconsistent ambient dimensions."""


class NotInLattice(BrokenflowError):
    """A queried member does not belong to the lattice."""


class AmbiguousLocation(BrokenflowError):
    """A point sits inside the tolerance band of some face: membership cannot
    be decided without guessing."""


class NotOnFace(BrokenflowError):
    """A base point does not lie on the requested face."""


class SingularBasePoint(BrokenflowError):
    """A base point lies in the singular part of the requested face."""


class InvalidEnergy(BrokenflowError):
    """Energy parameter must be positive."""


class ChartDomain(BrokenflowError):
    """A point is outside the coordinate patch of a face chart."""


class OffShell(BrokenflowError):
    """Initial data does not satisfy tau^2 + |v|^2 = lambda within tolerance."""


class IntegrationDiverged(BrokenflowError):
    """Numerical integration lost energy conservation beyond tolerance."""


class RadialDegeneracy(BrokenflowError):
    """An operation that requires staying away from the radial fixed points
    was invoked at or too close to them."""


class AmbiguousHit(BrokenflowError):
    """Hit detection fell inside the rank-tolerance band.

    ``path_prefix`` carries the already traced portion of the path when the
    error surfaces from an enumeration.
    """

    def __init__(self, message, path_prefix=None):
        super().__init__(message)
        self.path_prefix = path_prefix


class InsufficientResolution(BrokenflowError):
    """Too few usable samples near a break point for exponent fitting."""


class NoUniformLimit(BrokenflowError):
    """A path family does not converge uniformly."""


class EmptyRegion(BrokenflowError):
    """Rejection sampling produced no points in the requested region."""


class DerivativeMismatch(BrokenflowError):
    """Analytic and finite-difference derivatives disagree beyond tolerance."""
