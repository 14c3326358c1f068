"""Exception types raised by the package."""


class TimeDelayError(Exception):
    """Base class for all package errors."""


class ConstraintError(TimeDelayError, ValueError):
    """Invalid construction parameters (profile, grid, policy)."""


class DomainError(TimeDelayError, ValueError):
    """Argument outside the domain of a function (e.g. the origin)."""


class PacketValidityError(TimeDelayError, ValueError):
    """Packet support meets a critical value or a closed channel."""


class IncompatibleGridError(TimeDelayError, ValueError):
    """Energy grids or fiber dimensions do not match."""


class GridSizingError(TimeDelayError, ValueError):
    """Position/momentum grid too small for the requested flight."""


class ConvergenceError(TimeDelayError, RuntimeError):
    """A numerical procedure failed its own convergence check."""


class PreparationError(ConvergenceError):
    """Incoming scattering state could not be prepared reliably."""


class ConfigError(TimeDelayError, ValueError):
    """Invalid scenario file; the message names the offending key and guard."""
