"""Exception hierarchy shared by every module."""


class StableLabError(Exception):
    """Base class for all library errors."""


class NoCorkscrew(StableLabError):
    pass


class SingularPoint(StableLabError):
    pass


class BadGeometry(StableLabError):
    pass


class QuadratureFailure(StableLabError):
    pass


class RejectionOverflow(StableLabError):
    pass


class StepCapExceeded(StableLabError):
    pass


class EnvelopeViolation(StableLabError):
    pass


class PathDeadAtStart(StableLabError):
    pass


class LogDomain(StableLabError):
    pass


class NotContractive(StableLabError):
    pass


class BandViolated(StableLabError):
    def __init__(self, message, rho=None):
        super().__init__(message)
        self.rho = rho


class WitnessFailed(StableLabError):
    pass


class UnboundedRatio(StableLabError):
    pass


class ConfigError(StableLabError):
    pass
