"""Exception hierarchy shared across the package."""


class SpiroError(Exception):
    """Base class for all package errors."""


class InvalidCurve(SpiroError):
    pass


class NonMonotonicVolume(SpiroError):
    pass


class InvalidArgument(SpiroError):
    pass


class DegenerateCurve(SpiroError):
    pass


class EmptyPhase(SpiroError):
    pass


class ShapeError(SpiroError):
    pass


class PlanViolation(SpiroError):
    pass


class InvalidParams(SpiroError):
    pass


class EmptySequence(SpiroError):
    pass


class NotTrained(SpiroError):
    pass


class InvalidDistribution(SpiroError):
    pass


class DegenerateLabels(SpiroError):
    pass


class InvalidLoss(SpiroError):
    pass


class UndefinedMetric(SpiroError):
    pass


class EmptyGroup(SpiroError):
    pass


class InvalidSpec(SpiroError):
    pass


class ParseError(SpiroError):
    pass


class ValidationError(SpiroError):
    pass
