"""Exception hierarchy.

Every error raised by the library derives from :class:`FGSError`. The CLI maps
:class:`ConfigError` to exit code 2 and every :class:`NumericalError` to exit
code 3.
"""


class FGSError(Exception):
    """Base class for all library errors."""


class ConfigError(FGSError):
    """Invalid configuration or user input."""


class NumericalError(FGSError):
    """A numerical procedure failed or a model boundary was hit."""


class NonPositiveVelocity(NumericalError):
    pass


class NotNormalized(ConfigError):
    pass


class NonInjectivePhase(ConfigError):
    pass


class AssumptionViolated(ConfigError):
    pass


class UnsupportedForm(ConfigError):
    pass


class GridTooCoarse(ConfigError):
    pass


class GridMismatch(ConfigError):
    pass


class InsufficientData(ConfigError):
    pass


class MomentumUnderflow(NumericalError):
    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class SingularZ(NumericalError):
    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class NoConvergence(NumericalError):
    pass


class CDFNotMonotone(NumericalError):
    pass


class CFLViolation(NumericalError):
    pass


class DomainTooSmall(NumericalError):
    pass
