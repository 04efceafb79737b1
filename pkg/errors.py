from typing import Any, Dict, Optional


class DustError(Exception):
    """Base class for every error raised by the segmentation engine"""


class DomainError(DustError):
    """A value lies outside the mean or natural domain of a model"""

    def __init__(self, message: str, coordinate: Optional[int] = None, bound: Optional[float] = None):
        super().__init__(message)
        self.coordinate = coordinate
        self.bound = bound


class DegenerateSegment(DustError):
    """Segment minimum has no finite value (e.g. zero variance)"""


class EmptySegment(DustError):
    pass


class SegmentIndexError(DustError, IndexError):
    pass


class StateError(DustError):
    """Read of a global cost that has not been computed yet"""


class TieBreakUnsupported(DustError):
    pass


class SingularSystem(DustError):
    pass


class CorruptState(DustError):
    """Last-change array does not describe a valid segmentation"""


class ConfigError(DustError):
    pass


class InfeasiblePenalty(DustError):
    """Penalty too large for an adversarial sequence to exist"""


class SolveError(DustError):
    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class InputError(DustError):
    """Unreadable input data; carries the 1-based line and column"""

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None):
        location = ""
        if line is not None:
            location = f" (line {line}, column {column})" if column is not None else f" (line {line})"
        super().__init__(f"{message}{location}")
        self.line = line
        self.column = column
