"""Exception types raised by the solver stack."""


class RCWAError(Exception):
    """Base class for solver failures that map to a non-zero CLI exit."""


class RayleighAnomaly(RCWAError, ValueError):
    """Some order is grazing: ``alpha_n**2 == kappa**2 * eps`` for a half-space."""


class EigSolverFailure(RCWAError):
    """A slice eigendecomposition failed its residual check."""


class SingularInterface(RCWAError):
    """A mode-matching system at a slice or half-space interface is singular."""


class InsufficientPoints(RCWAError, ValueError):
    """Too few usable points to fit a convergence rate."""


class IllConditioned(UserWarning):
    """A slice eigenvector matrix is poorly conditioned."""
