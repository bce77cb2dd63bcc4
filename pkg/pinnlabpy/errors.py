"""Exception hierarchy shared by every pinnlabpy module."""

from typing import Optional


class PinnLabError(Exception):
    ''' Base class for all errors raised by pinnlabpy. '''


class ConfigurationError(PinnLabError, ValueError):
    ''' A configuration value is out of range or inconsistent with another one. '''


class CapabilityError(PinnLabError, NotImplementedError):
    ''' The request is well formed but beyond what the library supports. '''


class NumericalError(PinnLabError, ArithmeticError):
    ''' A non-finite value appeared during evaluation. '''
    def __init__(self, message: str, epoch: Optional[int] = None, point: Optional[int] = None) -> None:
        details = []
        if epoch is not None:
            details.append(f"epoch {epoch}")
        if point is not None:
            details.append(f"point {point}")
        if details:
            message = f"{message} ({', '.join(details)})"
        super().__init__(message)
        self.epoch: Optional[int] = epoch
        self.point: Optional[int] = point


class DivergenceError(NumericalError):
    ''' An integrator produced a non-finite state. '''
    def __init__(self, message: str, step: int) -> None:
        super().__init__(f"{message} at step {step}")
        self.step: int = step


class DomainError(PinnLabError, ValueError):
    ''' An argument lies outside the domain where the operation is defined. '''


class ParseError(PinnLabError, ValueError):
    ''' A data file does not follow its schema. '''
    def __init__(self, message: str, line: Optional[int] = None) -> None:
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line: Optional[int] = line


class DegenerateDirectionError(PinnLabError, ValueError):
    ''' Landscape directions are zero or collinear. '''


class UndefinedErrorMetric(PinnLabError, ValueError):
    ''' A relative error was requested against a zero reference. '''


class ArtifactConflictError(PinnLabError, FileExistsError):
    ''' An output file already exists with different content. '''
