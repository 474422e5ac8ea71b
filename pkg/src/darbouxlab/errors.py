"""Exception hierarchy shared by all darbouxlab modules."""

from __future__ import annotations


class DarbouxLabError(Exception):
    """Base class. ``module`` and ``operation`` are filled in for CLI error reports."""

    module = "darbouxlab"

    def __init__(self, message: str, *, operation: str | None = None, **details):
        super().__init__(message)
        self.operation = operation
        self.details = details

    def to_dict(self) -> dict:
        return {
            "error": type(self).__name__,
            "module": self.module,
            "operation": self.operation,
            "message": str(self),
        }


# core
class CoreError(DarbouxLabError):
    module = "core"


class InvalidBoundsError(CoreError, ValueError):
    pass


class DomainMismatchError(CoreError, ValueError):
    pass


class ZeroCrossingError(CoreError, ValueError):
    def __init__(self, message: str, index: int, **kw):
        super().__init__(message, **kw)
        self.index = index


class InconsistentLengthsError(CoreError, ValueError):
    pass


# eigensolve
class EigensolveError(DarbouxLabError):
    module = "eigensolve"


class WindowExhaustedError(EigensolveError):
    """Fewer levels than requested; the levels that were found travel along."""

    def __init__(self, message: str, levels: list, **kw):
        super().__init__(message, **kw)
        self.levels = levels


class NodefulError(EigensolveError, ValueError):
    pass


class LongRangeError(EigensolveError, ValueError):
    pass


# darboux
class DarbouxError(DarbouxLabError):
    module = "darboux"


class SingularSeedError(DarbouxError, ValueError):
    def __init__(self, message: str, nodes=(), **kw):
        super().__init__(message, **kw)
        self.nodes = list(nodes)


class SingularWronskianError(SingularSeedError):
    pass


class InsufficientLevelsError(DarbouxError):
    pass


class NoBoundStateError(DarbouxError):
    pass


# families
class FamiliesError(DarbouxLabError):
    module = "families"


class ForbiddenLambdaError(FamiliesError, ValueError):
    pass


class NoZeroModeError(FamiliesError, NoBoundStateError):
    pass


# shapeinv
class ShapeInvarianceError(DarbouxLabError):
    module = "shapeinv"


class InvalidParameterError(ShapeInvarianceError, ValueError):
    pass


class LevelOutOfRangeError(ShapeInvarianceError, ValueError):
    pass


class NoBracketError(ShapeInvarianceError):
    pass


# tdse
class TdseError(DarbouxLabError):
    module = "tdse"


class NormDriftError(TdseError):
    pass


class RealityViolationError(TdseError, ValueError):
    pass


class QuadratureDivergenceError(TdseError, FloatingPointError):
    pass


# krein
class KreinError(DarbouxLabError):
    module = "krein"


class DivergentIntegrandError(KreinError, ValueError):
    pass


class SingularSystemError(KreinError):
    pass


# cli
class ConfigValidationError(DarbouxLabError, ValueError):
    module = "cli"
