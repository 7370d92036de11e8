from typing import ClassVar


class PyCascadeError(RuntimeError):
    exit_code: ClassVar[int] = 1


class ConfigError(PyCascadeError):
    exit_code: ClassVar[int] = 2


class ExtinctionError(PyCascadeError):
    exit_code: ClassVar[int] = 3


class NumericError(PyCascadeError):
    exit_code: ClassVar[int] = 4


class ConfigInvalid(ConfigError):
    def __init__(self, field: str, reason: str, /) -> None:
        super().__init__(f'{field}: {reason}')
        self.field = field
        self.reason = reason


class MultipleGrids(ConfigError): ...


class InvalidWord(ConfigError): ...


class NotARotation(ConfigError): ...


class DimensionMismatch(ConfigError): ...


class WrongClassification(ConfigError): ...


class UndeterminedClassification(ConfigError): ...


class AnchorOffSupport(ConfigError): ...


class Extinct(ExtinctionError): ...


class RejectionCapExceeded(ExtinctionError): ...


class EmptySlab(ExtinctionError): ...


class EmptyBall(ExtinctionError): ...


class EmptyNeighborhood(ExtinctionError): ...


class ExclusionEmpty(ExtinctionError): ...


class CapExceeded(NumericError): ...


class Subcritical(NumericError): ...


class NoRoot(NumericError): ...


class DegenerateDenominator(NumericError): ...


class InsufficientRange(NumericError): ...


class SingularPointDetected(NumericError):
    def __init__(self, point: tuple[float, ...], value: float, /) -> None:
        super().__init__(f'Singular point at {point} (smallest singular value {value:.3g})')
        self.point = point
        self.value = value
