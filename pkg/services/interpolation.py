# services/interpolation.py - Waypoint interpolation with quintic clamped B-splines
import logging
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from config.settings import settings
from services.errors import DegenerateIntervalError
from services.schemas import TrajectoryProblem
from services.spline_core import (
    KnotVector,
    SplineCurve,
    TrajectorySamples,
    basis_matrix,
    build_knot_vector,
    derivative_operators,
    sample_trajectory,
)

logger = logging.getLogger(__name__)

DEGREE = settings.SPLINE_DEGREE
N_BOUNDARY_ROWS = 6


@dataclass(frozen=True, eq=False)
class JointTrajectory:
    """One curve per joint, all sharing the knot vector built from h"""

    h: np.ndarray
    knots: KnotVector
    curves: Tuple[SplineCurve, ...]

    @property
    def t_f(self) -> float:
        return self.knots.t_end

    @property
    def n_joints(self) -> int:
        return len(self.curves)

    def control_points(self) -> np.ndarray:
        """Shape (C+1, D)"""
        return np.column_stack([c.control_points for c in self.curves])

    def sample(self, rate: float = settings.SAMPLE_RATE_HZ) -> TrajectorySamples:
        return sample_trajectory(self.curves, rate)


def waypoint_knot_indices(n_waypoints: int, p: int = DEGREE) -> List[int]:
    """
    0-based knot indices at which the true waypoints are attained.

    The interpolated sequence is [w_1, v_1, w_2, ..., w_{W-1}, v_2, w_W] over the
    W+2 distinct knots; the virtual points v_1, v_2 sit on the second and the
    second-to-last of them and carry no passage equation.
    """
    if n_waypoints < 2:
        raise ValueError(f"at least two waypoints are required, got {n_waypoints}")
    W = n_waypoints
    return [p] + [p + l for l in range(2, W)] + [p + W + 1]


def virtual_knot_indices(n_waypoints: int, p: int = DEGREE) -> Tuple[int, int]:
    if n_waypoints < 2:
        raise ValueError(f"at least two waypoints are required, got {n_waypoints}")
    return p + 1, p + n_waypoints


def _check_h(h, n_waypoints: int) -> np.ndarray:
    h = np.asarray(h, dtype=float)
    if h.ndim != 1 or h.size != n_waypoints + 1:
        raise ValueError(f"interval vector must have W+1={n_waypoints + 1} entries, got {h.size}")
    return h


def system_matrix(h, n_waypoints: int, p: int = DEGREE) -> Tuple[np.ndarray, KnotVector]:
    """
    Matrix A of the interpolation system; depends only on h.

    Rows 0-5: first and last control point of the 1st, 2nd and 3rd derivative
    (start velocity, acceleration, jerk, then the same at the end).
    Rows 6..: basis values at the waypoint knots.
    """
    h = _check_h(h, n_waypoints)
    knots = build_knot_vector(h, p)
    ops = derivative_operators(knots, 3)
    start_rows = [op[0] for op in ops]
    end_rows = [op[-1] for op in ops]
    passage = basis_matrix(knots.knots[waypoint_knot_indices(n_waypoints, p)], knots, p)
    A = np.vstack([start_rows, end_rows, passage])
    return A, knots


def _rhs(problem: TrajectoryProblem) -> np.ndarray:
    """Right-hand sides for every joint, shape (W+6, D)"""
    bc = problem.boundary_array()
    return np.vstack([bc[0], bc[1], problem.waypoint_array().T])


def assemble_system(h, problem: TrajectoryProblem, joint: int) -> Tuple[np.ndarray, np.ndarray]:
    """(A, B_j) for one joint"""
    if not 0 <= joint < problem.n_joints:
        raise ValueError(f"joint {joint} outside [0, {problem.n_joints - 1}]")
    A, _ = system_matrix(h, problem.n_waypoints)
    return A, _rhs(problem)[:, joint]


def solve_control_points(h, problem: TrajectoryProblem) -> Tuple[KnotVector, np.ndarray]:
    """Knot vector and control points (C+1, D) for every joint, one factorization"""
    A, knots = system_matrix(h, problem.n_waypoints)
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > settings.MAX_CONDITION_NUMBER:
        raise DegenerateIntervalError(h, cond)
    theta = lu_solve(lu_factor(A, check_finite=False), _rhs(problem), check_finite=False)
    return knots, theta


def solve_trajectory(h: Sequence[float], problem: TrajectoryProblem) -> JointTrajectory:
    knots, theta = solve_control_points(h, problem)
    curves = tuple(SplineCurve(knots, theta[:, j]) for j in range(problem.n_joints))
    return JointTrajectory(np.asarray(h, dtype=float), knots, curves)
