# services/optimizer.py - Time/jerk objectives, kinematic constraints, NSGA-II and ladder downsampling
import logging
from contextlib import contextmanager
from dataclasses import dataclass, field
from multiprocessing.pool import ThreadPool
from typing import Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from pymoo.algorithms.moo.nsga2 import NSGA2
from pymoo.core.callback import Callback
from pymoo.core.problem import ElementwiseProblem, StarmapParallelization
from pymoo.indicators.hv import HV
from pymoo.operators.crossover.sbx import SBX
from pymoo.operators.mutation.pm import PM
from pymoo.operators.sampling.rnd import FloatRandomSampling
from pymoo.optimize import minimize
from pymoo.util.nds.non_dominated_sorting import NonDominatedSorting

from config.settings import settings
from services.errors import DegenerateIntervalError, OptimizationFailedError
from services.interpolation import JointTrajectory, solve_control_points
from services.schemas import (
    GenerationStats,
    KinematicLimits,
    LadderEntry,
    ObjectivePoint,
    ParetoFront,
    SolutionLadder,
    TrajectoryProblem,
)
from services.spline_core import KnotVector, basis_matrix, derivative_operators

logger = logging.getLogger(__name__)

GAUSS_NODES, GAUSS_WEIGHTS = np.polynomial.legendre.leggauss(3)
ORDER_NAMES = ("velocity", "acceleration", "jerk")
# Objectives of an interval vector whose interpolation system is degenerate
_DEGENERATE_PENALTY = 1e30


def eval_time(h: Sequence[float], n_joints: int) -> float:
    """f_time = D * sum(h)"""
    return float(n_joints * np.sum(np.asarray(h, dtype=float)))


def jerk_integral(knots: KnotVector, control_points: np.ndarray) -> float:
    """
    Integral of the squared jerk summed over joints.

    The jerk is piecewise quadratic, so a 3-point Gauss-Legendre rule on every
    knot span integrates its square exactly.
    """
    jerk_knots = knots.trimmed(3)
    jerk_cp = derivative_operators(knots, 3)[-1] @ control_points
    spans = np.array(jerk_knots.spans())
    half = 0.5 * (spans[:, 1] - spans[:, 0])
    mid = 0.5 * (spans[:, 1] + spans[:, 0])
    t = (mid[:, None] + half[:, None] * GAUSS_NODES[None, :]).ravel()
    w = (half[:, None] * GAUSS_WEIGHTS[None, :]).ravel()
    jerk = basis_matrix(t, jerk_knots, jerk_knots.degree) @ jerk_cp
    if jerk.ndim == 1:
        jerk = jerk[:, None]
    return float(np.sum(w[:, None] * jerk**2))


def eval_jerk(h: Sequence[float], problem: TrajectoryProblem) -> float:
    knots, theta = solve_control_points(h, problem)
    return jerk_integral(knots, theta)


@dataclass(frozen=True)
class ConstraintDetail:
    order: str
    joint: int
    max_abs: float
    bound: float
    excess: float


@dataclass
class ConstraintReport:
    violation: float
    feasible: bool
    details: List[ConstraintDetail] = field(default_factory=list)


def _excess(knots: KnotVector, control_points: np.ndarray, bounds: np.ndarray) -> np.ndarray:
    """Sum of |c_{k,d}| - bound excesses, shape (3, D) for orders 1..3"""
    out = np.zeros((3, control_points.shape[1]))
    for d, op in enumerate(derivative_operators(knots, 3)):
        over = np.abs(op @ control_points) - bounds[d][None, :]
        out[d] = np.maximum(over, 0.0).sum(axis=0)
    return out


def constraint_margins(h, trajectory: JointTrajectory, limits: KinematicLimits) -> ConstraintReport:
    """
    Kinematic constraints checked on derivative control points.

    By the convex hull property, |c_{k,d}| <= bound for every control point of
    orders 1-3 is sufficient for the sampled velocity, acceleration and jerk.
    """
    if not np.allclose(np.asarray(h, dtype=float), trajectory.h):
        raise ValueError("trajectory was not solved for this interval vector")
    limits = limits.broadcast(trajectory.n_joints)
    bounds = limits.as_array()
    theta = trajectory.control_points()
    excess = _excess(trajectory.knots, theta, bounds)

    details = []
    for d, op in enumerate(derivative_operators(trajectory.knots, 3)):
        peaks = np.abs(op @ theta).max(axis=0)
        for j in range(trajectory.n_joints):
            details.append(
                ConstraintDetail(ORDER_NAMES[d], j, float(peaks[j]), float(bounds[d, j]), float(excess[d, j]))
            )
    violation = float(excess.sum())
    return ConstraintReport(violation=violation, feasible=violation == 0.0, details=details)


def _interval_gap_map(n_waypoints: int) -> np.ndarray:
    """Index of the waypoint gap containing each of the W+1 intervals"""
    W = n_waypoints
    is_true = [True, False] + [True] * (W - 2) + [False, True]
    passed = np.cumsum(is_true)
    return passed[:-1] - 1


def lower_bounds(problem: TrajectoryProblem) -> np.ndarray:
    """
    Minimum interval durations: a waypoint gap cannot be covered faster than
    max_j |w_{l+1} - w_l| / v_max_j. A gap split by virtual points shares its
    bound equally among its sub-intervals.
    """
    w = problem.waypoint_array()
    v_max = np.asarray(problem.require_limits().v_max, dtype=float)
    gap_bounds = (np.abs(np.diff(w, axis=1)) / v_max[:, None]).max(axis=0)
    gap_of = _interval_gap_map(problem.n_waypoints)
    counts = np.bincount(gap_of, minlength=gap_bounds.size)
    return gap_bounds[gap_of] / counts[gap_of]


def search_bounds(problem: TrajectoryProblem) -> Tuple[np.ndarray, np.ndarray]:
    """Box for the genetic search: positivity floor below, beta * max(lb, t_ref) above"""
    lb = lower_bounds(problem)
    xl = np.maximum(lb, settings.INTERVAL_FLOOR_S)
    xu = settings.UPPER_BOUND_FACTOR * np.maximum(lb, settings.UPPER_BOUND_REF_S)
    return xl, xu


@dataclass(frozen=True)
class Evaluation:
    f_time: float
    f_jerk: float
    violation: float

    @property
    def feasible(self) -> bool:
        return self.violation == 0.0


def evaluate_candidate(h, problem: TrajectoryProblem) -> Evaluation:
    """Both objectives and the total constraint violation of one interval vector"""
    f_time = eval_time(h, problem.n_joints)
    try:
        knots, theta = solve_control_points(h, problem)
    except DegenerateIntervalError as e:
        logger.debug("degenerate candidate: %s", e)
        return Evaluation(f_time, _DEGENERATE_PENALTY, _DEGENERATE_PENALTY)
    violation = float(_excess(knots, theta, problem.require_limits().as_array()).sum())
    return Evaluation(f_time, jerk_integral(knots, theta), violation)


class IntervalProblem(ElementwiseProblem):
    """pymoo view of the constrained bi-objective problem over interval vectors"""

    def __init__(self, problem: TrajectoryProblem, **kwargs):
        xl, xu = search_bounds(problem)
        super().__init__(n_var=xl.size, n_obj=2, n_ieq_constr=1, xl=xl, xu=xu, **kwargs)
        self.trajectory_problem = problem

    def _evaluate(self, x, out, *args, **kwargs):
        ev = evaluate_candidate(x, self.trajectory_problem)
        out["F"] = [ev.f_time, ev.f_jerk]
        out["G"] = [ev.violation]


def non_dominated(F: np.ndarray) -> np.ndarray:
    """Indices of the unique non-dominated rows of F, sorted by the first objective"""
    if len(F) == 0:
        return np.array([], dtype=int)
    _, first = np.unique(F, axis=0, return_index=True)
    front = np.asarray(NonDominatedSorting().do(F[first], only_non_dominated_front=True), dtype=int)
    idx = first[front]
    return idx[np.lexsort((F[idx, 1], F[idx, 0]))]


def hypervolume(F: np.ndarray, reference: np.ndarray) -> float:
    """Area dominated by F and bounded by the reference point"""
    reference = np.asarray(reference, dtype=float)
    F = np.asarray(F, dtype=float).reshape(-1, 2)
    F = F[np.all(F < reference, axis=1)]
    if len(F) == 0:
        return 0.0
    return float(HV(ref_point=reference).do(F))


class FrontHistory(Callback):
    """Per-generation statistics of the feasible non-dominated archive"""

    def __init__(self):
        super().__init__()
        self.archive = np.empty((0, 2))
        self.reference: Optional[np.ndarray] = None
        self.stats: List[GenerationStats] = []

    def notify(self, algorithm):
        F = algorithm.pop.get("F")
        cv = algorithm.pop.get("CV").ravel()
        feasible = F[cv <= 0.0]
        if self.reference is None and len(feasible):
            self.reference = 1.1 * feasible.max(axis=0)
        if len(feasible):
            merged = np.vstack([self.archive, feasible])
            self.archive = merged[non_dominated(merged)]
        hv = hypervolume(self.archive, self.reference) if self.reference is not None else 0.0
        self.stats.append(
            GenerationStats(
                generation=algorithm.n_gen,
                hypervolume=hv,
                feasible_count=int(len(feasible)),
                best_violation=float(cv.min()),
            )
        )
        logger.debug("generation %d: hv=%.6g feasible=%d", algorithm.n_gen, hv, len(feasible))


@dataclass
class OptimizationResult:
    front: ParetoFront
    population_h: np.ndarray
    population_f: np.ndarray
    population_cv: np.ndarray


@contextmanager
def _runner(workers: int) -> Iterator[Optional[StarmapParallelization]]:
    if workers <= 1:
        yield None
        return
    with ThreadPool(workers) as pool:
        yield StarmapParallelization(pool.starmap)


def nsga2(
    problem: TrajectoryProblem,
    population: int = settings.POPULATION,
    generations: int = settings.GENERATIONS,
    seed: int = settings.DEFAULT_SEED,
    workers: int = settings.EVAL_WORKERS,
) -> OptimizationResult:
    """
    Constrained NSGA-II over interval vectors.

    Feasible individuals dominate infeasible ones, which are ranked by total
    violation. Returns the feasible non-dominated subset of the final population.
    """
    if population < 4 or population % 2:
        raise ValueError(f"population must be even and at least 4, got {population}")
    if generations < 1:
        raise ValueError(f"generations must be positive, got {generations}")

    history = FrontHistory()
    with _runner(workers) as runner:
        extra = {"elementwise_runner": runner} if runner is not None else {}
        pymoo_problem = IntervalProblem(problem, **extra)
        algorithm = NSGA2(
            pop_size=population,
            sampling=FloatRandomSampling(),
            crossover=SBX(prob=settings.SBX_PROB, eta=settings.SBX_ETA),
            mutation=PM(prob=1.0, eta=settings.PM_ETA, prob_var=1.0 / pymoo_problem.n_var),
            eliminate_duplicates=True,
        )
        logger.info(
            "NSGA-II: %d intervals, population %d, %d generations, seed %d",
            pymoo_problem.n_var, population, generations, seed,
        )
        res = minimize(pymoo_problem, algorithm, ("n_gen", generations), seed=seed, callback=history, verbose=False)

    X = res.pop.get("X")
    F = res.pop.get("F")
    CV = res.pop.get("CV").ravel()
    feasible = np.flatnonzero(CV <= 0.0)
    if feasible.size == 0:
        raise OptimizationFailedError(float(CV.min()))

    keep = feasible[non_dominated(F[feasible])]
    points = [
        ObjectivePoint(h=X[i].tolist(), f_time=float(F[i, 0]), f_jerk=float(F[i, 1]), feasible=True, violation=0.0)
        for i in keep
    ]
    front = ParetoFront(
        problem_hash=problem.fingerprint(),
        seed=seed,
        population=population,
        generations=generations,
        points=points,
        history=history.stats,
        reference_point=[] if history.reference is None else history.reference.tolist(),
    )
    logger.info("NSGA-II finished: %d non-dominated feasible solutions", len(points))
    return OptimizationResult(front=front, population_h=X, population_f=F, population_cv=CV)


def downsample(
    front: Union[ParetoFront, Sequence[ObjectivePoint]],
    n: int = settings.LADDER_SIZE,
    problem: Optional[TrajectoryProblem] = None,
) -> SolutionLadder:
    """
    Pick n front members with the augmented scalarization function.

    Objectives are normalized with the front's ideal and nadir points. For the
    m-th pick the importance of time is a = (m-1)/(n-1) and that of jerk 1-a;
    the more important objective gets the smaller divisor, so m=1 lands on
    the min-jerk end and m=n on the min-time end. A repeated pick falls back
    to the nearest member not yet chosen.
    """
    points = list(front.points if isinstance(front, ParetoFront) else front)
    if not points:
        raise ValueError("cannot downsample an empty front")
    if n < 1:
        raise ValueError(f"ladder size must be positive, got {n}")

    F_all = np.array([[p.f_time, p.f_jerk] for p in points])
    _, unique = np.unique(F_all, axis=0, return_index=True)
    unique = np.sort(unique)
    F = F_all[unique]
    ideal, nadir = F.min(axis=0), F.max(axis=0)
    scale = np.where(nadir > ideal, nadir - ideal, 1.0)
    Fn = (F - ideal) / scale

    eps, rho = settings.ASF_EPSILON, settings.ASF_RHO
    chosen: List[int] = []
    for m in range(1, n + 1):
        if len(chosen) == len(F):
            break
        a = (m - 1) / (n - 1) if n > 1 else 0.0
        divisor = np.maximum(np.array([1.0 - a, a]), eps)
        scaled = Fn / divisor
        asf = scaled.max(axis=1) + rho * scaled.sum(axis=1)
        best = int(np.argmin(asf))
        if best in chosen:
            free = np.array([i for i in range(len(F)) if i not in chosen])
            dist = np.linalg.norm(Fn[free] - Fn[best], axis=1)
            best = int(free[np.argmin(dist)])
        chosen.append(best)

    order = sorted(chosen, key=lambda i: (-F[i, 0], F[i, 1]))
    truncated = len(order) < n
    if truncated:
        logger.warning("front holds %d distinct solutions; ladder truncated from %d", len(order), n)

    entries = []
    for rank, i in enumerate(order, start=1):
        p = points[unique[i]]
        entries.append(
            LadderEntry(
                index=rank,
                h=list(p.h),
                t_f=float(np.sum(p.h)),
                f_time=p.f_time,
                f_jerk=p.f_jerk,
                feasible=p.feasible,
                violation=p.violation,
            )
        )
    return SolutionLadder(
        problem_hash=front.problem_hash if isinstance(front, ParetoFront) else (problem.fingerprint() if problem else ""),
        waypoints_hash=problem.waypoints_fingerprint() if problem else "",
        seed=front.seed if isinstance(front, ParetoFront) else None,
        requested_size=n,
        truncated=truncated,
        entries=entries,
    )


class TrajectoryOptimizer:
    """Optimization pipeline: NSGA-II front, then the downsampled solution ladder"""

    def __init__(
        self,
        population: int = settings.POPULATION,
        generations: int = settings.GENERATIONS,
        ladder_size: int = settings.LADDER_SIZE,
        seed: int = settings.DEFAULT_SEED,
        workers: int = settings.EVAL_WORKERS,
    ):
        self.population = population
        self.generations = generations
        self.ladder_size = ladder_size
        self.seed = seed
        self.workers = workers

    def optimize(self, problem: TrajectoryProblem) -> Tuple[ParetoFront, SolutionLadder]:
        result = nsga2(problem, self.population, self.generations, self.seed, self.workers)
        ladder = downsample(result.front, self.ladder_size, problem)
        return result.front, ladder
