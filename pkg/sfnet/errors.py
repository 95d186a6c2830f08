"""Error hierarchy and exit-code classification."""
from __future__ import annotations


class SfNetError(Exception):
    """Base class for every error raised by sfnet."""


class ShapeError(SfNetError, ValueError):
    pass


class PrecisionError(SfNetError):
    pass


class ContractError(SfNetError):
    pass


class ConfigurationError(SfNetError):
    pass


class UsageError(SfNetError):
    pass


class DegenerateRowError(SfNetError):
    pass


class DataError(SfNetError):
    pass


class FormatError(DataError):
    pass


class BadMagicError(FormatError):
    pass


class TruncatedPayloadError(FormatError):
    pass


class ExtentOverflowError(FormatError):
    pass


class EmptyDatasetError(DataError):
    pass


class SplitError(DataError):
    pass


class NumericError(SfNetError):
    pass


class NanLossError(NumericError):
    def __init__(self, epoch: int, step: int, loss: float, sample: int | None = None):
        self.epoch = epoch
        self.step = step
        self.loss = loss
        self.sample = sample
        where = f"epoch={epoch} step={step}"
        if sample is not None:
            where += f" sample={sample}"
        super().__init__(f"non-finite loss {loss!r} at {where}")


class GradCheckError(NumericError):
    pass


EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, (UsageError, ConfigurationError, ContractError)):
        return EXIT_USAGE
    if isinstance(exc, (DataError, OSError, ShapeError)):
        return EXIT_DATA
    if isinstance(exc, (NumericError, DegenerateRowError, PrecisionError)):
        return EXIT_NUMERIC
    return EXIT_USAGE
