"""Exception hierarchy shared by all regensim modules."""


class RegenSimError(Exception):
    """Base class for every error raised by regensim."""


class UnsupportedFamily(RegenSimError):
    pass


class InvalidShape(RegenSimError):
    pass


class InvalidParameters(RegenSimError, ValueError):
    pass


class NotDecomposable(RegenSimError):
    pass


class LambdaTooSmall(RegenSimError):
    pass


class SingularRouting(RegenSimError):
    pass


class Unstable(RegenSimError):
    pass


class InfiniteSecondMoment(RegenSimError):
    pass


class IntervalContainsEvent(RegenSimError):
    pass


class NoRegenerationsFound(RegenSimError):
    pass


class NoCycles(RegenSimError):
    pass


class TooFewCycles(RegenSimError):
    pass


class DegenerateVariance(RegenSimError):
    pass


class ConfigInvalid(RegenSimError):
    pass


class ModeUnavailable(RegenSimError):
    pass
