"""Exception hierarchy shared by all afm modules."""


class AFMError(Exception):
    """Base class for every error raised by afm."""


class InvalidArgument(AFMError, ValueError):
    pass


class DimensionMismatch(AFMError, ValueError):
    pass


class NotResolved(AFMError):
    """A search ran out of room before the requested tolerance was met."""

    def __init__(self, message, **details):
        super().__init__(message)
        self.details = details


class NonFinite(AFMError, FloatingPointError):
    pass


class InvalidCertificate(AFMError, ValueError):
    pass


class ContainmentViolated(AFMError):
    def __init__(self, message, state=None, time=None):
        super().__init__(message)
        self.state = state
        self.time = time


class MissingJacobian(AFMError):
    pass


class NotPositiveDefinite(AFMError, ValueError):
    pass


class UnstableA(AFMError):
    pass


class NormTooLarge(AFMError):
    pass


class NoConvergence(AFMError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace or [])


class AssumptionFailed(AFMError):
    def __init__(self, assumption, message):
        super().__init__(f"{assumption}: {message}")
        self.assumption = assumption


class CrossCheckFailed(AFMError):
    pass


class TrainingDiverged(AFMError):
    pass


class DecayViolated(AFMError, ValueError):
    pass


class ConfigInvalid(AFMError):
    def __init__(self, path, message):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class IllConditioned(AFMError):
    """A least-squares system was too ill-conditioned even after regularization."""

    def __init__(self, message, cond=None):
        super().__init__(message)
        self.cond = cond
