"""Exception hierarchy shared by every layer of the toolkit."""


class KalinvError(Exception):
    """Base class for all toolkit errors.

    The run loops attach the records completed before the failure as
    ``history`` when an error escapes an iteration.
    """

    history = None


class FactorizationFailed(KalinvError):
    """Cholesky factorization failed even after jitter escalation."""


class DimensionMismatch(KalinvError, ValueError):
    pass


class StepError(KalinvError):
    """An iteration could not be completed."""


class ForwardModelFailure(StepError):
    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class NonFiniteForwardValue(ForwardModelFailure):
    pass


class JacobianUnavailable(StepError):
    pass


class UnstableStep(StepError):
    pass


class NoConvergence(KalinvError):
    pass


class SingularNormalEquations(KalinvError):
    pass


class SolveFailure(ForwardModelFailure):
    pass


class TrajectoryBlowup(ForwardModelFailure):
    pass


class ConfigError(KalinvError, ValueError):
    def __init__(self, field, reason):
        super().__init__(f"{field}: {reason}")
        self.field = field
        self.reason = reason
