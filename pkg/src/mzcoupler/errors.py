"""Exception types raised across the package."""


class CouplerError(Exception):
    """Base class for all errors raised by mzcoupler."""


class UnreachableRatio(CouplerError, ValueError):
    """Requested splitting ratio lies outside the visibility-limited band."""


class DriveRangeExceeded(CouplerError, ValueError):
    """Requested phase needs a drive voltage outside the allowed window."""


class SignalLost(CouplerError):
    """Reference photodiode sum fell below the detection floor."""


class SeriesTooShort(CouplerError, ValueError):
    pass


class InvalidTau(CouplerError, ValueError):
    pass


class NoEdgeFound(CouplerError, ValueError):
    pass


class InconsistentBudget(CouplerError, ValueError):
    """Known contributions exceed the measured total in a quadrature budget."""


class InfeasibleSchedule(CouplerError, ValueError):
    """A release ratio falls outside what the coupler can realize."""


class DegenerateDistribution(CouplerError, ValueError):
    pass


class TooManyBins(CouplerError, ValueError):
    pass


class ConfigInvalid(CouplerError, ValueError):
    """Configuration document failed validation; message names the key."""
