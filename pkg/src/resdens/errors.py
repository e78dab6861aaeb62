"""Exception hierarchy shared by every module."""


class ResdensError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(ResdensError, ValueError):
    pass


class EmptyWindow(ResdensError):
    """No observation falls inside the kernel support around the query."""


class AllWindowsEmpty(ResdensError):
    pass


class DegenerateTrim(ResdensError):
    """The trimming set retains no usable observation."""


class AllCellsFailed(ResdensError):
    pass


class TooManyFailures(ResdensError):
    pass


class EpsNotOnGrid(ResdensError, KeyError):
    pass


class DomainError(ResdensError, ValueError):
    pass


class DegenerateData(ResdensError, ValueError):
    pass


class NonpositiveDensity(ResdensError, ValueError):
    pass


class UnknownLevel(ResdensError, ValueError):
    pass


class ConfigError(ResdensError, ValueError):
    """Invalid configuration value; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


# Errors that turn a grid cell or a replication into a recorded failure
# instead of aborting the whole sweep.
ESTIMATION_FAILURES = (EmptyWindow, AllWindowsEmpty, DegenerateTrim)
