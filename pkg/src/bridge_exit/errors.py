"""Exception and warning types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of the requested quantity."""


class InfiniteMeanError(ArithmeticError):
    """The requested first-exit mean is infinite.

    Raised when the pinned endpoint of a bridge lies inside the exit band, so
    the bridge survives to its horizon with positive probability.  The
    survival probability is attached for callers that want to report it.
    """

    def __init__(self, message, survival_probability=None):
        super().__init__(message)
        self.survival_probability = survival_probability


class SeriesTruncationWarning(RuntimeWarning):
    """A series hit its term budget before its tail bound met the tolerance."""


class NonConvergenceWarning(RuntimeWarning):
    """An adaptive quadrature stopped before reaching its tolerance."""


class DiscretizationWarning(RuntimeWarning):
    """A simulation step is coarse relative to the band it resolves."""
