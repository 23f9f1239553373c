"""Exception hierarchy shared by every module."""

from __future__ import annotations

__all__ = [
    "AsympExpError",
    "InvalidEdge",
    "DisconnectedGraph",
    "OutOfRangeIndex",
    "InvalidMetric",
    "FormatError",
    "GenerationFailed",
    "ExactTooLarge",
    "EmptyAdmissibleFamily",
    "NoAdjacency",
    "NoSpectralGap",
    "NotConverged",
    "DensityViolated",
    "GateFailed",
    "AmbiguousPieceMatch",
]


class AsympExpError(Exception):
    """Base class for all errors raised by this package."""


class InvalidEdge(AsympExpError, ValueError):
    pass


class DisconnectedGraph(AsympExpError, ValueError):
    def __init__(self, message: str, component: tuple[int, ...] = ()):
        super().__init__(message)
        self.component = component


class OutOfRangeIndex(AsympExpError, IndexError):
    pass


class InvalidMetric(AsympExpError, ValueError):
    pass


class FormatError(AsympExpError, ValueError):
    """Malformed amspace/amop/ammap input."""


class GenerationFailed(AsympExpError, RuntimeError):
    pass


class ExactTooLarge(AsympExpError):
    """Exhaustive enumeration requested on a piece above the size limit."""

    def __init__(self, size: int, limit: int):
        super().__init__(
            f"exact mode needs at most {limit} points per piece, got {size}; "
            "use heuristic mode or raise max_exact (hard cap 24)"
        )
        self.size = size
        self.limit = limit


class EmptyAdmissibleFamily(AsympExpError, ValueError):
    """The integer size window for a density floor contains no set size."""


class NoAdjacency(AsympExpError, ValueError):
    """Operation needs a graph piece but got an explicit metric."""


class NoSpectralGap(AsympExpError, ValueError):
    pass


class NotConverged(AsympExpError, RuntimeError):
    pass


class DensityViolated(AsympExpError, ValueError):
    def __init__(self, message: str, point: int | None = None, distance: float | None = None):
        super().__init__(message)
        self.point = point
        self.distance = distance


class GateFailed(AsympExpError):
    def __init__(self, gate: str, detail: str = ""):
        super().__init__(f"gate {gate!r} failed" + (f": {detail}" if detail else ""))
        self.gate = gate
        self.detail = detail


class AmbiguousPieceMatch(AsympExpError, ValueError):
    pass
