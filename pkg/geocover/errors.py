class GeoCoverError(Exception):
    """Base class of every error raised by geocover."""


class DomainError(GeoCoverError, ValueError):
    pass


class SurfaceParseError(DomainError):
    pass


class PreconditionError(GeoCoverError, ValueError):
    pass


class SurfaceMismatchError(PreconditionError):
    pass


class InvariantError(GeoCoverError, RuntimeError):
    pass


class CapExceededError(GeoCoverError):
    pass


class IntegerOverflowError(GeoCoverError, OverflowError):
    pass


class NonTerminationError(GeoCoverError):
    pass


class PointCollisionError(GeoCoverError):
    pass
