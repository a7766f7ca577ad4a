"""Exception types shared across the toolkit."""


class RenvolError(Exception):
    """Base class for all toolkit errors."""


class BadSpec(RenvolError):
    """Geometry description is malformed or inconsistent."""


class NonPositiveDefinite(RenvolError):
    """A boundary metric (or a collar slice) failed a positivity check."""


class ResolutionInsufficient(RenvolError):
    """Spectral tail of a grid field carries too much energy for the
    requested tolerance."""


class UnsupportedGeometry(RenvolError):
    """The requested operation is not defined for this geometry kind."""


class DimensionUnsupported(RenvolError):
    """A coefficient formula was requested outside the boundary dimension
    it is implemented for."""


class ParameterOutOfRange(RenvolError):
    """A discrete parameter (symmetric-function index, dimension pair)
    lies outside the admissible range."""


class FitUnstable(RenvolError):
    """A power-law / decay-exponent fit did not stabilize."""


class NewtonDiverged(RenvolError):
    """Damped Newton iteration failed to reduce the residual."""


class AdmissibilityLost(RenvolError):
    """A curvature-cone condition failed at a solver iterate (second
    elementary symmetric problem only)."""


class IllConditioned(RenvolError):
    """Design matrix of a ladder fit exceeded the condition threshold."""


class QuadratureFailure(RenvolError):
    """Adaptive quadrature did not converge to the requested tolerance."""


class RouteMismatch(RenvolError):
    """Two independent computational routes for the same quantity
    disagree beyond tolerance."""


class NotUmbilic(RenvolError):
    """An operation requiring a pure-trace second fundamental form was
    invoked on a non-umbilic boundary."""


class StepTooCoarse(RenvolError):
    """Finite-difference step error estimate exceeds the requested
    tolerance."""
