class RiskSeqError(Exception):
    """Base class for all errors raised by riskseq. Carries the CLI exit code."""

    exit_code = 1


class ConfigError(RiskSeqError):
    """Invalid or unreadable experiment configuration."""

    exit_code = 2


class DataFormatError(RiskSeqError):
    """A binary or text artifact does not match its documented layout."""

    exit_code = 3

    def __init__(self, message: str, offset: int | None = None, path: str | None = None):
        self.offset = offset
        self.path = path
        location = ""
        if path is not None:
            location += f"{path}: "
        if offset is not None:
            location += f"at offset {offset}: "
        super().__init__(f"{location}{message}")


class InvalidArgumentError(RiskSeqError, ValueError):
    """A precondition of a library operation was violated."""

    exit_code = 3


class UndefinedMetricError(RiskSeqError, ValueError):
    """The requested metric is undefined for the given input."""

    exit_code = 3


class DegenerateInputError(UndefinedMetricError):
    """Too many bootstrap resamples made the metric undefined."""


class NumericalError(RiskSeqError, ArithmeticError):
    """NaN or Inf appeared in a tensor or a loss."""

    exit_code = 4


class CacheConsumedError(RiskSeqError, RuntimeError):
    """A forward cache was passed to backward more than once."""
