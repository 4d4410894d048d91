"""Exception hierarchy shared by the numerical core and the command line."""


class PolykinError(Exception):
    """Base class for all package errors."""

    exit_code = 5


class GridError(PolykinError, ValueError):
    """Invalid grid specification or array/grid shape mismatch."""

    exit_code = 3


class ParameterError(PolykinError, ValueError):
    """Model parameters outside their admissible range."""

    exit_code = 3


class DataError(PolykinError, ValueError):
    """Distribution values that are negative or not finite."""

    exit_code = 3


class VacuumError(PolykinError):
    """Mass too small to define velocity and temperatures."""

    exit_code = 2


class TensorNotPositiveDefinite(PolykinError):
    """The corrected temperature tensor has a non-positive eigenvalue."""

    exit_code = 5


class StabilityError(PolykinError):
    """Time step violates a scheme stability or CFL restriction."""

    exit_code = 5


class SchemeError(PolykinError):
    """A time step produced values the scheme is supposed to exclude."""

    exit_code = 5


class SnapshotFormatError(PolykinError):
    """Malformed or truncated snapshot file."""

    exit_code = 3
