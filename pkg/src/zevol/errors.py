"""Exception hierarchy.

Every error carries the CLI exit code of its class: 2 for configuration
problems, 3 for numerical-tolerance failures, 4 for violated preconditions.
"""


class ZevolError(Exception):
    exit_code = 1


class ConfigError(ZevolError):
    exit_code = 2


class NumericalError(ZevolError):
    exit_code = 3


class PreconditionError(ZevolError):
    exit_code = 4


# numerical failures
class NoConvergence(NumericalError):
    pass


class IllConditioned(NumericalError):
    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class SingularConversion(NumericalError):
    pass


class RouteMismatch(NumericalError):
    def __init__(self, message, route_a=None, route_b=None):
        super().__init__(message)
        self.route_a = route_a
        self.route_b = route_b


class ThresholdDivergence(NumericalError):
    pass


# precondition violations
class EmptyGrid(PreconditionError):
    pass


class NotOpen(PreconditionError):
    pass


class NotClosed(PreconditionError):
    pass


class NotIntermediate(PreconditionError):
    pass


class NotPropagating(PreconditionError):
    pass


class GridMismatch(PreconditionError):
    pass


class SegmentTooLong(PreconditionError):
    pass


class SupportViolation(PreconditionError):
    pass


class ZeroCurrent(PreconditionError):
    pass
