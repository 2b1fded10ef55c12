"""Errors - Exception hierarchy shared by all components"""

from typing import Optional, Sequence


class SemiflowError(Exception):
    """Base class for every error raised by the components"""


class DomainError(SemiflowError, ValueError):
    """Argument outside the mathematical domain of an operation"""


class ShapeError(SemiflowError, ValueError):
    """Array shape or grid mismatch"""


class ConfigurationError(SemiflowError, ValueError):
    """Invalid configuration value"""

    def __init__(self, message: str, field_path: Optional[str] = None):
        self.field_path = field_path
        if field_path:
            message = f"{field_path}: {message}"
        super().__init__(message)


class QuadratureError(SemiflowError):
    """Numerical integration did not reach the requested tolerance"""

    def __init__(self, message: str, achieved: float):
        self.achieved = achieved
        super().__init__(f"{message} (achieved tolerance {achieved:.3e})")


class TimeGridError(SemiflowError, ValueError):
    """Requested time is not on the trajectory time grid"""

    def __init__(self, t: float, nearest: Sequence[float]):
        self.t = t
        self.nearest = list(nearest)
        listed = ", ".join(f"{x:.6g}" for x in self.nearest)
        super().__init__(f"time {t:.6g} is not on the time grid (nearest grid times: {listed})")


class ContinuationError(SemiflowError):
    """Splice point of two trajectories does not match"""

    def __init__(self, message: str, discrepancy: float):
        self.discrepancy = discrepancy
        super().__init__(f"{message} (measured discrepancy {discrepancy:.3e})")


class MonotonicityError(SemiflowError):
    """Energy would increase"""


class EmptySetError(SemiflowError):
    """Trajectory set is empty (non-emptiness violated)"""


class VacuumError(SemiflowError):
    """Too many near-vacuum cells to recover a velocity"""

    def __init__(self, fraction: float, limit: float):
        self.fraction = fraction
        super().__init__(
            f"vacuum cells make up {fraction:.2%} of the grid (limit {limit:.2%})"
        )


class CFLViolationError(SemiflowError):
    """Time step exceeds the stability limit"""

    def __init__(self, message: str, step: int):
        self.step = step
        super().__init__(f"step {step}: {message}")


class PositivityError(SemiflowError):
    """Density became negative during an update"""

    def __init__(self, step: int, cell: tuple):
        self.step = step
        self.cell = cell
        super().__init__(f"negative density at step {step}, cell {cell}")


class DegenerateFamilyError(SemiflowError):
    """Candidate family is empty after deduplication"""


class InitialDataMismatchError(SemiflowError, ValueError):
    """Members of a trajectory set do not share their initial data"""


class GeneratorError(SemiflowError):
    """Candidate generator failed to produce a set"""


class AdmissibilityError(SemiflowError):
    """A discarded member strictly precedes every survivor"""
