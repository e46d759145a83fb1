# services/errors.py - Domain exceptions shared by the planner services
from typing import Any, Optional, Sequence


class PlannerError(Exception):
    """Base class for failures of the planning / adaptation pipeline"""


class InputFormatError(PlannerError):
    """A file or payload could not be parsed; `field` names the offending entry"""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class DegenerateIntervalError(PlannerError):
    """The interpolation system for an interval vector is singular or ill-conditioned"""

    def __init__(self, h: Sequence[float], condition_number: float):
        self.h = [float(x) for x in h]
        self.condition_number = float(condition_number)
        super().__init__(
            f"interpolation system is degenerate for h={self.h} "
            f"(condition number {self.condition_number:.3g})"
        )


class OptimizationFailedError(PlannerError):
    """No feasible interval vector was found by the search"""

    def __init__(self, best_violation: float):
        self.best_violation = float(best_violation)
        super().__init__(
            f"no feasible solution found; best constraint violation {self.best_violation:.6g}"
        )


class NoDataError(PlannerError):
    """An RR window contains no samples"""

    def __init__(self, window_end: float, window: float):
        self.window_end = window_end
        self.window = window
        super().__init__(f"no RR samples in ({window_end - window:g}, {window_end:g}]")


class UndefinedRateError(PlannerError):
    """Error rate requested with errors but no completed cycles"""


class TruncatedSessionError(PlannerError):
    """The RR source ran out before the session end; `report` holds what was simulated"""

    def __init__(self, message: str, report: Optional[Any] = None):
        self.report = report
        super().__init__(message)
