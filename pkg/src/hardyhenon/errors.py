"""Exception types shared across the package."""


class HardyHenonError(Exception):
    """Base class for package errors."""


class NonIntegrable(HardyHenonError):
    """Weight too singular at the origin for the given profile."""


class DegenerateProfile(HardyHenonError):
    """Operation undefined on the (near-)zero profile."""


class GridTooShort(HardyHenonError):
    """Target grid does not cover the profile support."""


class BracketInvalid(HardyHenonError):
    """Both bracket endpoints classify identically."""


class NonConvergence(HardyHenonError):
    """Iteration budget exhausted before the tolerance was met."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class IntegratorStall(HardyHenonError):
    """ODE step size underflowed."""


class StabilityViolation(HardyHenonError):
    """Explicit time step forced below the minimum."""


class WrongRegime(HardyHenonError):
    """Operation requires the other parameter regime."""


class NoTailRadius(HardyHenonError):
    """No grid point satisfies the tail smallness condition."""


class ConsistencyFailure(HardyHenonError):
    """A cross-check identity failed beyond tolerance."""
