"""Exception hierarchy shared by every stage of the pipeline."""


class S2RError(Exception):
    """Base class for all package errors."""


class InvalidConfigError(S2RError, ValueError):
    pass


class ShapeError(S2RError, ValueError):
    pass


class DegenerateBatchError(S2RError, ValueError):
    """Raised when a loss or metric has no valid pixels to reduce over."""


class TrainingDivergenceError(S2RError, RuntimeError):
    def __init__(self, message, term=None, last_good=None):
        super().__init__(message)
        self.term = term
        self.last_good = last_good


class StageOrderError(S2RError, RuntimeError):
    """A stage was started from a checkpoint that lacks its frozen prerequisites."""


class MissingModuleError(S2RError, RuntimeError):
    pass


class DepthEncodingError(S2RError, ValueError):
    pass
