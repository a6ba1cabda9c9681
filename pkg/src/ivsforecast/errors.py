"""Exception and warning types raised across the package."""


class IVSError(Exception):
    """Base class for all package errors."""


class DataError(IVSError):
    """Problems with input data (files, schemas, empty series)."""


class ConfigError(IVSError):
    """Invalid run or generator configuration."""


class ComputeError(IVSError):
    """Numerical failures during fitting, forecasting or testing."""


class UnreadableFile(DataError):
    pass


class SchemaMismatch(DataError):
    pass


class EmptySeries(DataError):
    pass


class AllGroupsDropped(DataError):
    pass


class NoRunFound(DataError):
    pass


class InsufficientHistory(DataError):
    pass


class InvalidConfig(ConfigError):
    pass


class DomainError(ComputeError, ValueError):
    pass


class EmptyInput(ComputeError, ValueError):
    pass


class TooFewObservations(ComputeError):
    pass


class RankDeficient(ComputeError):
    pass


class SeriesTooShort(ComputeError):
    pass


class EmptyPath(ComputeError):
    pass


class ZeroRealized(ComputeError, ValueError):
    pass


class BenchmarkMissing(ComputeError):
    pass


class ZeroBenchmarkRMSE(ComputeError):
    pass


class NoCommonDates(ComputeError):
    pass


class NoInteriorMinimum(UserWarning):
    """The profiled lambda optimum landed on a search bound."""


class NonConvergence(UserWarning):
    """An ARIMA fit fell back to a simpler model."""


class DegenerateVariance(UserWarning):
    """A bootstrap variance was numerically zero; the pair is treated as tied."""
