"""Exception types shared across the library."""


class CapExceeded(ValueError):
    """An enumeration or size cap was exceeded.

    Raised instead of silently truncating: every exhaustive routine in this
    library is exact, so exceeding a cap means the request cannot be honored.
    """


class ZeroMassError(ValueError):
    """Conditioning on an event of probability zero."""


class RegimeError(ValueError):
    """Parameters outside the regime where a construction exists.

    Typical trigger: an independent-set polynomial turning nonpositive, i.e.
    weights beyond the Shearer threshold.
    """


class HolleyViolation(ValueError):
    """A single-site conditional comparison required by a monotone coupling
    failed, so the requested coupling does not exist along this route."""


class ConsistencyError(AssertionError):
    """Two independent computations of the same quantity disagree.

    This is an internal identity check failing, not a user error, and always
    indicates a bug or a broken numerical regime.
    """


class ResolutionError(RuntimeError):
    """A site update could not be resolved exactly (cluster too large for
    exact conditional enumeration). Carries the offending cluster."""

    def __init__(self, message, cluster=None):
        super().__init__(message)
        self.cluster = cluster


class NonTermination(RuntimeError):
    """Coupling from the past hit the horizon cap with unresolved sites."""

    def __init__(self, message, unresolved=None, horizon=None):
        super().__init__(message)
        self.unresolved = unresolved
        self.horizon = horizon
