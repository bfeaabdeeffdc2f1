"""Exception hierarchy shared by all frizione modules."""


class FrizioneError(Exception):
    """Base class for every error raised by this package."""


class DomainError(FrizioneError, ValueError):
    """An argument lies outside the supported domain of an operation."""


class CapabilityError(FrizioneError):
    """The requested combination has no implemented formula.

    Raised instead of silently falling back when a closed form only holds
    under a parameter constraint (e.g. a mixture order bound), or when no
    closed expression exists for the requested law/order pair.
    """


class UsageError(FrizioneError, TypeError):
    """An operation was called with an inconsistent method/argument combo."""


class ConvergenceError(FrizioneError, ArithmeticError):
    """A quadrature or series failed to reach the requested tolerance.

    Carries the last two successive estimates so the caller can judge how
    far convergence got.
    """

    def __init__(self, message, estimates=None):
        super().__init__(message)
        self.estimates = estimates
