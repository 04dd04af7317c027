class ExwaveError(Exception):
    """Base class for all simulator errors."""


class InvalidDimensionError(ExwaveError, ValueError):
    pass


class NonFiniteFieldError(ExwaveError, ValueError):
    pass


class KernelConstructionError(ExwaveError, ValueError):
    pass


class CircleMapError(ExwaveError, ValueError):
    pass


class StaleCacheError(ExwaveError, ValueError):
    """Backward called with a cache from another network or parameter version."""


class NonFiniteScoreError(ExwaveError, ValueError):
    pass


class NonFiniteGradientError(ExwaveError, ValueError):
    def __init__(self, parameter: str):
        super().__init__(f"Non-finite gradient for parameter '{parameter}'")
        self.parameter = parameter


class TrainingDivergedError(ExwaveError, ValueError):
    pass


class IdxFormatError(ExwaveError, ValueError):
    pass


class IdxConsistencyError(ExwaveError, ValueError):
    pass


class IdxTruncatedError(ExwaveError, OSError):
    pass


class DatasetNotFoundError(ExwaveError, FileNotFoundError):
    pass


class CheckpointFormatError(ExwaveError, ValueError):
    pass


class ConfigError(ExwaveError, ValueError):
    pass


class FetchError(ExwaveError, OSError):
    pass
