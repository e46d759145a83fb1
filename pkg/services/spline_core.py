# services/spline_core.py - B-spline basis, clamped knot vectors and curve evaluation
from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np


def _frozen(values, ndim: int) -> np.ndarray:
    arr = np.array(values, dtype=float, ndmin=ndim)
    arr.setflags(write=False)
    return arr


def _safe_ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    """Elementwise num/den with the 0/0 -> 0 convention of the De Boor recursion"""
    num, den = np.broadcast_arrays(num, den)
    out = np.zeros(num.shape)
    np.divide(num, den, out=out, where=den != 0)
    return out


@dataclass(frozen=True, eq=False)
class KnotVector:
    """Non-decreasing knot sequence of a degree-p spline"""

    knots: np.ndarray
    degree: int

    def __post_init__(self):
        knots = _frozen(self.knots, 1)
        if knots.ndim != 1 or knots.size < 2 * (self.degree + 1):
            raise ValueError(f"need at least {2 * (self.degree + 1)} knots for degree {self.degree}")
        if np.any(np.diff(knots) < 0):
            raise ValueError("knots must be non-decreasing")
        object.__setattr__(self, "knots", knots)

    def __len__(self) -> int:
        return self.knots.size

    @property
    def n_basis(self) -> int:
        return self.knots.size - self.degree - 1

    @property
    def t_start(self) -> float:
        return float(self.knots[self.degree])

    @property
    def t_end(self) -> float:
        return float(self.knots[-self.degree - 1])

    @property
    def is_clamped(self) -> bool:
        p = self.degree
        k = self.knots
        return bool(np.all(k[: p + 1] == k[0]) and np.all(k[-p - 1 :] == k[-1]))

    def spans(self) -> List[tuple]:
        """Non-empty knot spans inside the curve domain, as (start, end) pairs"""
        inner = np.unique(self.knots[self.degree : self.knots.size - self.degree])
        return list(zip(inner[:-1].tolist(), inner[1:].tolist()))

    def trimmed(self, d: int) -> "KnotVector":
        """Knot vector of the d-th derivative curve (degree p-d)"""
        if not 0 <= d <= self.degree:
            raise ValueError(f"derivative order {d} outside [0, {self.degree}]")
        if d == 0:
            return self
        return KnotVector(self.knots[d:-d], self.degree - d)


@dataclass(frozen=True, eq=False)
class SplineCurve:
    """Scalar B-spline b(t) = sum_k c_k N_{k,p}(t)"""

    knots: KnotVector
    control_points: np.ndarray = field(repr=False)

    def __post_init__(self):
        cp = _frozen(self.control_points, 1)
        if cp.ndim != 1 or cp.size != self.knots.n_basis:
            raise ValueError(
                f"expected {self.knots.n_basis} control points for {len(self.knots)} knots "
                f"of degree {self.knots.degree}, got {cp.size}"
            )
        object.__setattr__(self, "control_points", cp)

    @property
    def degree(self) -> int:
        return self.knots.degree

    @property
    def t_f(self) -> float:
        return self.knots.t_end

    def derivative(self, d: int = 1) -> "SplineCurve":
        if d == 0:
            return self
        return SplineCurve(self.knots.trimmed(d), derivative_control_points(self.control_points, self.knots, d))

    def __call__(self, t) -> np.ndarray:
        return evaluate(self, t)


def basis_matrix(t, knots, degree: int) -> np.ndarray:
    """
    Evaluate all degree-p basis functions at the points t.

    Triangular De Boor evaluation: degree-0 indicators on half-open spans
    [tau_i, tau_{i+1}), with the last non-empty span closed at the final knot,
    raised one degree at a time. Returns an array of shape (len(t), n_basis).
    """
    K = np.asarray(knots.knots if isinstance(knots, KnotVector) else knots, dtype=float)
    t = np.atleast_1d(np.asarray(t, dtype=float))[:, None]

    N = ((K[:-1] <= t) & (t < K[1:])).astype(float)
    nonempty = np.flatnonzero(K[:-1] < K[1:])
    if nonempty.size:
        N[t[:, 0] == K[-1], nonempty[-1]] = 1.0

    for d in range(1, degree + 1):
        n = K.size - 1 - d
        left = _safe_ratio(t - K[:n], K[d : d + n] - K[:n])
        right = _safe_ratio(K[d + 1 : d + 1 + n] - t, K[d + 1 : d + 1 + n] - K[1 : 1 + n])
        N = left * N[:, :n] + right * N[:, 1 : n + 1]
    return N


def basis(k: int, p: int, t: float, knots) -> float:
    """Value of the basis function N_{k,p}(t); k is 0-based"""
    K = np.asarray(knots.knots if isinstance(knots, KnotVector) else knots, dtype=float)
    n_basis = K.size - p - 1
    if not 0 <= k < n_basis:
        raise ValueError(f"basis index {k} outside [0, {n_basis - 1}]")
    if not K[0] <= t <= K[-1]:
        raise ValueError(f"t={t} outside knot range [{K[0]}, {K[-1]}]")
    return float(basis_matrix(t, K, p)[0, k])


def build_knot_vector(h: Sequence[float], p: int = 5) -> KnotVector:
    """
    Clamped knot vector from an interval vector.

    p+1 zeros, the running sums of h, and t_f = sum(h) repeated p+1 times;
    W+1 intervals give W+2+2p knots.
    """
    h = np.asarray(h, dtype=float)
    if h.ndim != 1 or h.size < 1:
        raise ValueError("interval vector must be a non-empty 1-D sequence")
    if np.any(~np.isfinite(h)) or np.any(h <= 0):
        raise ValueError(f"interval vector has non-positive entries: {h.tolist()}")

    running = np.cumsum(h)
    t_f = running[-1]
    knots = np.concatenate([np.zeros(p + 1), running[:-1], np.full(p + 1, t_f)])
    return KnotVector(knots, p)


def derivative_operators(knots: KnotVector, max_order: int) -> List[np.ndarray]:
    """
    Linear maps from position control points to the control points of
    derivatives 1..max_order.

    Each order applies c_{i,r} = (p-r+1) (c_{i+1,r-1} - c_{i,r-1}) / (tau_{i+p+1} - tau_{i+r});
    a zero knot difference contributes nothing.
    """
    p = knots.degree
    if not 1 <= max_order <= p:
        raise ValueError(f"derivative order {max_order} outside [1, {p}]")
    K = knots.knots
    n = knots.n_basis
    op = np.eye(n)
    ops = []
    for r in range(1, max_order + 1):
        m = n - r
        coef = _safe_ratio(np.full(m, float(p - r + 1)), K[p + 1 : p + 1 + m] - K[r : r + m])
        step = np.zeros((m, m + 1))
        idx = np.arange(m)
        step[idx, idx] = -coef
        step[idx, idx + 1] = coef
        op = step @ op
        ops.append(op)
    return ops


def derivative_control_points(cp, knots: KnotVector, d: int) -> np.ndarray:
    """
    Control points of the d-th derivative curve (C+1-d of them).

    The recursion runs on the points themselves, one order at a time, so
    constant control points give exactly zero.
    """
    p = knots.degree
    if not 1 <= d <= p:
        raise ValueError(f"derivative order {d} outside [1, {p}]")
    c = np.asarray(cp, dtype=float)
    if c.shape[0] != knots.n_basis:
        raise ValueError(f"expected {knots.n_basis} control points, got {c.shape[0]}")
    K = knots.knots
    for r in range(1, d + 1):
        m = c.shape[0] - 1
        coef = _safe_ratio(np.full(m, float(p - r + 1)), K[p + 1 : p + 1 + m] - K[r : r + m])
        c = coef.reshape((m,) + (1,) * (c.ndim - 1)) * np.diff(c, axis=0)
    return c


def _check_domain(curve: SplineCurve, t: np.ndarray):
    lo, hi = curve.knots.t_start, curve.knots.t_end
    if np.any(t < lo) or np.any(t > hi) or np.any(np.isnan(t)):
        raise ValueError(f"t outside curve domain [{lo}, {hi}]")


def evaluate(curve: SplineCurve, t):
    """Curve value at t (scalar in, float out; array in, array out)"""
    arr = np.asarray(t, dtype=float)
    _check_domain(curve, arr)
    values = basis_matrix(arr.ravel(), curve.knots, curve.degree) @ curve.control_points
    return float(values[0]) if arr.ndim == 0 else values.reshape(arr.shape)


def evaluate_derivative(curve: SplineCurve, t, d: int):
    if d == 0:
        return evaluate(curve, t)
    if not 1 <= d <= curve.degree:
        raise ValueError(f"derivative order {d} outside [0, {curve.degree}]")
    arr = np.asarray(t, dtype=float)
    _check_domain(curve, arr)
    return evaluate(curve.derivative(d), t)


@dataclass(frozen=True, eq=False)
class TrajectorySamples:
    """Time-indexed table of position, velocity, acceleration and jerk per joint"""

    time: np.ndarray
    position: np.ndarray
    velocity: np.ndarray
    acceleration: np.ndarray
    jerk: np.ndarray

    @property
    def n_rows(self) -> int:
        return self.time.size

    def as_table(self) -> np.ndarray:
        """Columns: t, then q, qd, qdd, qddd for every joint"""
        return np.column_stack([self.time, self.position, self.velocity, self.acceleration, self.jerk])


def sample_times(t_f: float, rate: float) -> np.ndarray:
    """t = 0, 1/rate, ... with t_f always the final row"""
    if rate <= 0:
        raise ValueError(f"sampling rate must be positive, got {rate}")
    n = int(np.floor(t_f * rate + 1e-9))
    times = np.minimum(np.arange(n + 1) / rate, t_f)
    if t_f - times[-1] > 1e-12:
        times = np.append(times, t_f)
    else:
        times[-1] = t_f
    return times


def sample_trajectory(curves: Sequence[SplineCurve], rate: float = 500.0) -> TrajectorySamples:
    """Sample a set of curves sharing one time domain"""
    if not curves:
        raise ValueError("no curves to sample")
    t_f = curves[0].t_f
    times = sample_times(t_f, rate)

    columns = []
    for d in range(4):
        columns.append(np.column_stack([evaluate_derivative(c, times, d) for c in curves]))
    return TrajectorySamples(times, *columns)
