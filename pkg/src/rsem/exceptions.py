"""Exception hierarchy.

Input problems subclass ``ValueError``; numerical breakdowns subclass
``RuntimeError``. Everything derives from :class:`RSEMError`.
"""


class RSEMError(Exception):
    """Base class for all package errors."""


# generator
class NonConservative(RSEMError, ValueError):
    pass


class NegativeRate(RSEMError, ValueError):
    pass


class Reducible(RSEMError, ValueError):
    pass


class SingularSystem(RSEMError, RuntimeError):
    pass


class HorizonExceeded(RSEMError, ValueError):
    pass


# spectral / dirichlet
class LengthMismatch(RSEMError, ValueError):
    pass


class NoConvergence(RSEMError, RuntimeError):
    pass


class NonPositiveEta(RSEMError, ValueError):
    pass


class Star6Violated(RSEMError, ValueError):
    pass


class NotReversible(RSEMError, ValueError):
    pass


class NonPositiveLambda0(RSEMError, ValueError):
    pass


class NonPositiveVector(RSEMError, ValueError):
    pass


# partition
class EmptyClass(RSEMError, ValueError):
    pass


class NonMonotoneCuts(RSEMError, ValueError):
    pass


class UnresolvableBound(RSEMError, ValueError):
    pass


class NotMMatrix(RSEMError, ValueError):
    pass


# em / measure
class ParameterOutOfRange(RSEMError, ValueError):
    pass


class NonFiniteState(RSEMError, RuntimeError):
    """The explicit scheme left the floating-point range.

    ``step`` is the index k of the first gridpoint whose state is not finite.
    """

    def __init__(self, step, message=None):
        self.step = int(step)
        super().__init__(message or f"non-finite state at step {self.step}")


class EmptySupport(RSEMError, ValueError):
    pass


class DegenerateWindow(RSEMError, ValueError):
    pass


class ConfigError(RSEMError, ValueError):
    """Invalid run configuration; ``path`` names the offending field."""

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}")


class AdmissibilityWarning(UserWarning):
    """A run uses a stepsize or order outside the certified range."""
