"""Exception hierarchy shared across the package."""

from __future__ import annotations


class DCRankError(Exception):
    """Base class for every error raised by dcrank."""


class InvalidInputError(DCRankError, ValueError):
    pass


class DimensionError(DCRankError, ValueError):
    pass


class DuplicateKeyError(DCRankError, ValueError):
    def __init__(self, keys):
        self.keys = list(keys)
        super().__init__(f"duplicate id(s): {', '.join(map(str, self.keys))}")


class CacheMissError(DCRankError, LookupError):
    def __init__(self, keys):
        self.keys = list(keys)
        shown = ", ".join(str(k) for k in self.keys[:20])
        more = f" (+{len(self.keys) - 20} more)" if len(self.keys) > 20 else ""
        super().__init__(f"cache miss for {len(self.keys)} key(s): {shown}{more}")


class ConsistencyError(DCRankError):
    """A cache key was re-put with different bytes."""


class FormatError(DCRankError):
    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)


class CoverageError(DCRankError):
    def __init__(self, missing):
        self.missing = list(missing)
        super().__init__(f"no ranked list for question(s): {', '.join(self.missing[:20])}")


class SchemaError(DCRankError, ValueError):
    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        self.line = line
        self.field = field
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{message}")


class NonFiniteGradientError(DCRankError, FloatingPointError):
    def __init__(self, names):
        self.names = list(names)
        super().__init__(f"non-finite gradient in: {', '.join(self.names)}")


class TrainingDiverged(DCRankError):
    """Loss became NaN/Inf; ``last_good`` holds the parameters before the bad step."""

    def __init__(self, epoch: int, step: int, last_good=None):
        self.epoch = epoch
        self.step = step
        self.last_good = last_good
        super().__init__(f"training diverged at epoch {epoch}, step {step}")


class ProvenanceError(DCRankError):
    pass


class StageError(DCRankError):
    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")
