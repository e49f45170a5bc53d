"""Exception types raised across the package."""


class ODLError(Exception):
    """Base class for errors raised by odlglm."""


class DomainError(ODLError, ValueError):
    """An input lies outside the domain of a family or link."""


class DimensionError(ODLError, ValueError):
    """Array shapes do not agree."""


class SolverDivergence(ODLError, ArithmeticError):
    """The proximal-gradient iteration blew up or kept increasing the objective."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class DegenerateProjection(ODLError, ArithmeticError):
    """The nodewise scale tau_r fell below its floor."""

    def __init__(self, r, tau, floor):
        super().__init__(f"coordinate {r}: tau={tau:.3g} is below the floor {floor:.3g}")
        self.r = r
        self.tau = tau
        self.floor = floor


class SnapshotError(ODLError, ValueError):
    """A snapshot could not be decoded (bad magic, version or checksum)."""


class BatchFormatError(ODLError, ValueError):
    """A batch stream file is malformed."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class SchemaError(ODLError, ValueError):
    """A records table lacks required columns or holds unparsable values."""
