"""Exception hierarchy.

Errors split into two families so the command line can map them onto exit
codes: bad input (``InputError``) and numerical breakdown (``NumericalError``).
"""

from __future__ import annotations


class SvmPathError(Exception):
    """Base class for every error raised by this package."""


class InputError(SvmPathError, ValueError):
    """Malformed data or configuration."""


class ParseError(InputError):
    def __init__(self, message: str, line: int | None = None) -> None:
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DatasetError(InputError):
    pass


class NumericalError(SvmPathError, ArithmeticError):
    """A computation could not be completed to the required accuracy."""


class SingularSystemError(NumericalError):
    def __init__(self, message: str, smallest_pivot: float = 0.0) -> None:
        self.smallest_pivot = smallest_pivot
        super().__init__(f"{message} (smallest pivot {smallest_pivot:.3e})")


class QpError(NumericalError):
    def __init__(self, message: str, iterate=None) -> None:
        self.iterate = iterate
        super().__init__(message)


class PartitionUpdateError(NumericalError):
    pass


class CyclingError(NumericalError):
    pass


class OracleError(NumericalError):
    pass


class CertificateError(NumericalError):
    pass


class PathError(NumericalError):
    """Wraps a failure inside the tracer with the breakpoint where it happened."""

    def __init__(self, message: str, k: int, theta: float) -> None:
        self.k = k
        self.theta = theta
        super().__init__(f"breakpoint {k} (theta={theta:.17g}): {message}")
