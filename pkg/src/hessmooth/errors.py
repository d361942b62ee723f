"""
Exception hierarchy shared by the library and the command line front end.
"""

from typing import Optional, Sequence, Tuple


class HessmoothError(Exception):
    """Base class for every error raised by hessmooth."""


class DomainError(HessmoothError, ValueError):
    """Invalid domain input (mesh, grid mask, scattered points)."""


class MeshFormatError(DomainError):
    """Malformed OFF, OBJ, PGM or CSV content."""

    def __init__(self, message: str, line: Optional[int] = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DegenerateFaceError(DomainError):
    def __init__(self, face: int, area: float):
        super().__init__(f"degenerate triangle {face} (area {area:.3e})")
        self.face = face
        self.area = area


class NonManifoldEdgeError(DomainError):
    def __init__(self, edge: Tuple[int, int], count: int):
        super().__init__(f"non-manifold edge {edge} shared by {count} triangles")
        self.edge = edge
        self.count = count


class SnapError(DomainError):
    """A point could not be snapped to a unique nearby node."""


class SolverError(HessmoothError):
    """Numerical failure in a factorization, eigen-solve or iteration."""


class NotPositiveDefiniteError(SolverError):
    def __init__(self, pivot_index: int, pivot_value: float):
        super().__init__(
            f"matrix is not positive definite: pivot {pivot_index} = {pivot_value:.3e}"
        )
        self.pivot_index = pivot_index
        self.pivot_value = pivot_value


class RankDeficiencyError(SolverError):
    def __init__(self, message: str, pivot_index: Optional[int] = None):
        if pivot_index is not None:
            message = f"{message} (vanishing pivot {pivot_index})"
        super().__init__(message)
        self.pivot_index = pivot_index


class ConvergenceError(SolverError):
    def __init__(self, message: str, history: Sequence = ()):
        super().__init__(message)
        self.history = list(history)


class FlowError(SolverError):
    def __init__(self, step: int, cause: Exception):
        super().__init__(f"flow aborted at step {step}: {cause}")
        self.step = step
        self.cause = cause
