"""Exception hierarchy.

Every failure the library can signal derives from :class:`DisplatError`, so
callers can catch the whole family at once. The CLI maps a few of these to
fixed exit codes (see :mod:`displat.cli`).
"""


class DisplatError(Exception):
    """Base class for all library errors."""


class WindowTooSmall(DisplatError):
    """A lattice window is too small for the requested stencil or margin."""


class ResolutionTooLow(DisplatError):
    """A quadrature grid cannot resolve the requested oscillation."""


class InsufficientSamples(DisplatError):
    """Too few samples fall inside a fit window."""


class OutOfRange(DisplatError):
    """A spectral parameter lies outside its admissible interval."""


class BranchError(DisplatError):
    """A branch selection failed (argument on a cut, or root outside its domain)."""


class NearSingular(DisplatError):
    """A matrix is too ill-conditioned to invert at the working precision."""

    def __init__(self, message, sigma_min=None, condition=None):
        super().__init__(message)
        self.sigma_min = sigma_min
        self.condition = condition


class WeightTooSmall(DisplatError):
    """The weight exponent does not satisfy the expansion hypothesis."""


class Unimplemented(DisplatError):
    """A coefficient order outside the closed-form set was requested."""


class EmptySupport(DisplatError):
    """The potential vanishes identically."""


class ChainSingular(DisplatError):
    """An auxiliary inverse in the operator chain could not be formed."""

    def __init__(self, message, stage=None):
        super().__init__(message)
        self.stage = stage


class RouteMismatch(DisplatError):
    """The two independent constructions of a subspace disagree."""

    def __init__(self, message, space=None, distance=None):
        super().__init__(message)
        self.space = space
        self.distance = distance


class DegenerateVPrime(DisplatError):
    """The vector Q v_1 vanishes, so the linear coefficient is undefined."""


class QuadratureNotConverged(DisplatError):
    """Panel doubling changed a quadrature result by more than the tolerance."""


class WavefrontCollision(DisplatError):
    """The propagating front reaches the window boundary inside the fit window."""
