"""Exception types raised across the package."""


class NestMCError(Exception):
    """Base class for all package errors."""


class InvalidParameter(NestMCError, ValueError):
    pass


class NotPositiveDefinite(NestMCError, ValueError):
    pass


class NotPowerOfTwo(NestMCError, ValueError):
    pass


class DimensionMismatch(NestMCError, ValueError):
    pass


class LevelOutOfRange(NestMCError, IndexError):
    pass


class InnerSamplerUnavailable(NestMCError):
    """The problem cannot draw from the inner conditional distribution."""


class MissingTruth(NestMCError):
    """An analytic reference was requested for a problem without one."""


class DegenerateInput(NestMCError, ValueError):
    pass
