# services/adaptation.py - Windowed mean RR and the HRV-based decision maker
import logging
import math
import threading
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from services.errors import NoDataError
from services.schemas import HrvParams, TimelineRow

logger = logging.getLogger(__name__)

# Variations and step quotients are compared at nanosecond resolution
_RESOLUTION_DIGITS = 9


def as_stream(rr_stream) -> np.ndarray:
    """(timestamp_s, rr_s) rows as an (N, 2) float array"""
    arr = np.asarray(rr_stream, dtype=float)
    if arr.size == 0:
        return np.empty((0, 2))
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("RR stream must be a sequence of (timestamp, rr) pairs")
    return arr


def window_origin(first_timestamp: float, window: float) -> float:
    """Window grid start for a stream: the grid point at or just below its first sample"""
    return math.floor(round(first_timestamp / window, _RESOLUTION_DIGITS)) * window


def window_mean(rr_stream, window_end: float, window: float) -> float:
    """Mean RR of the samples with timestamp in (window_end - window, window_end]"""
    if window <= 0:
        raise ValueError(f"window must be positive, got {window}")
    stream = as_stream(rr_stream)
    ts = stream[:, 0]
    mask = (ts > window_end - window) & (ts <= window_end)
    if not mask.any():
        raise NoDataError(window_end, window)
    return float(np.mean(stream[mask, 1]))


@dataclass(frozen=True)
class DecisionState:
    """Previous window mean and the current 1-based ladder index of every path"""

    prev_mean_rr: Optional[float]
    indices: Tuple[int, ...]
    sizes: Tuple[int, ...]
    rr_stress_max: float

    @property
    def index(self) -> int:
        return self.indices[0]


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _clamp(index: int, n: int) -> int:
    return max(1, min(n, index))


def init_state(params: HrvParams, n: Union[int, Sequence[int]]) -> DecisionState:
    """Start every path at round(n - sigma_r / delta_rs), clamped to [1, n]"""
    sizes = (n,) if isinstance(n, int) else tuple(n)
    if not sizes or any(s < 1 for s in sizes):
        raise ValueError(f"ladder sizes must be positive, got {sizes}")
    indices = tuple(_clamp(_round_half_up(s - params.sigma_rest / params.delta_rs), s) for s in sizes)
    return DecisionState(prev_mean_rr=None, indices=indices, sizes=sizes, rr_stress_max=params.rr_stress_max)


def decide_step(mean_rr: float, state: DecisionState, params: HrvParams) -> int:
    """
    Ladder step for the current window mean.

    Branches, first match wins:
      stress detected      drop larger than delta_rs and below rest level -> floor step (<= 0)
      rest detected        any rise at or above the stress level -> ceil step (> 0)
      cumulative stress    mean below rr_stress - sigma_s -> -1
      otherwise            0
    The first window only initializes the state.
    """
    prev = state.prev_mean_rr
    if prev is None:
        return 0
    change = round(mean_rr - prev, _RESOLUTION_DIGITS)

    if change < -params.delta_rs and mean_rr < params.rr_rest:
        drop = mean_rr - min(params.rr_rest, prev)
        return math.floor(round((drop + params.delta_rs) / params.delta_rs, _RESOLUTION_DIGITS))
    if change > 0 and mean_rr >= params.rr_stress:
        rise = mean_rr - max(params.rr_stress, prev)
        return math.ceil(round(rise / params.delta_sr, _RESOLUTION_DIGITS))
    if mean_rr < state.rr_stress_max:
        return -1
    return 0


def apply_step(state: DecisionState, delta: int, sizes: Optional[Sequence[int]] = None) -> DecisionState:
    """Move every path by the same delta, clamped to its own ladder"""
    sizes = tuple(sizes) if sizes is not None else state.sizes
    if len(sizes) != len(state.indices):
        raise ValueError("one ladder size per path is required")
    indices = tuple(_clamp(k + delta, n) for k, n in zip(state.indices, sizes))
    return replace(state, indices=indices, sizes=sizes)


def calibrate_rest(rr_stream) -> Tuple[float, float]:
    """Rest-level mean RR and its standard deviation from a baseline recording"""
    stream = as_stream(rr_stream)
    if len(stream) == 0:
        raise ValueError("baseline recording holds no RR samples")
    rr = stream[:, 1]
    sigma = float(np.std(rr, ddof=1)) if len(rr) > 1 else 0.0
    return float(np.mean(rr)), sigma


def ladder_size_for(params: HrvParams) -> int:
    """Ladder size covering the RR span [rr_s - sigma_s, rr_r + sigma_r] in delta_rs steps"""
    span = (params.rr_rest + params.sigma_rest) - (params.rr_stress - params.sigma_stress)
    return max(1, _round_half_up(round(span / params.delta_rs, _RESOLUTION_DIGITS)))


def warn_on_ladder_size(params: HrvParams, sizes: Union[int, Sequence[int]]) -> bool:
    """Log a warning when a ladder does not cover the RR span of the parameters; True on mismatch"""
    expected = ladder_size_for(params)
    sizes = (sizes,) if isinstance(sizes, int) else tuple(sizes)
    mismatched = [n for n in sizes if n != expected]
    if mismatched:
        logger.warning(
            "ladder size %s differs from %d implied by the RR span and delta_rs=%g; steps will not map one-to-one",
            mismatched,
            expected,
            params.delta_rs,
        )
    return bool(mismatched)


def map_rr_to_index(rr: float, params: HrvParams, n: int) -> int:
    """Initial mapping of a mean RR onto the ladder; rr = rr_rest gives the default start index"""
    return _clamp(_round_half_up(n - (params.rr_rest + params.sigma_rest - rr) / params.delta_rs), n)


class DecisionMaker:
    """
    Owner of the decision state. Window results are written under a lock and
    indices are read under the same lock, so a reader at a cycle boundary
    never sees a half-applied step.
    """

    def __init__(
        self,
        params: HrvParams,
        sizes: Union[int, Sequence[int]],
        pin_index: Optional[int] = None,
        initial_rr: Optional[float] = None,
    ):
        self.params = params
        self.pin_index = pin_index
        state = init_state(params, sizes)
        if pin_index is not None:
            if not 1 <= pin_index <= max(state.sizes):
                raise ValueError(f"pinned index {pin_index} outside [1, {max(state.sizes)}]")
            state = replace(state, indices=tuple(_clamp(pin_index, n) for n in state.sizes))
        elif initial_rr is not None:
            state = replace(state, indices=tuple(map_rr_to_index(initial_rr, params, n) for n in state.sizes))
        self._state = state
        self._lock = threading.Lock()
        self._timeline: List[TimelineRow] = []
        # live ingestion; the window grid is anchored on the first sample
        self._buffer: List[Tuple[float, float]] = []
        self._next_window_end: Optional[float] = None
        self._last_ts: Optional[float] = None

    @property
    def state(self) -> DecisionState:
        with self._lock:
            return self._state

    def current_indices(self) -> Tuple[int, ...]:
        with self._lock:
            return self._state.indices

    @property
    def timeline(self) -> List[TimelineRow]:
        with self._lock:
            return list(self._timeline)

    def close_window(self, window_end: float, mean_rr: Optional[float]) -> TimelineRow:
        """Record one window; mean_rr None marks a data gap (previous mean carried, no step)"""
        with self._lock:
            state = self._state
            gap = mean_rr is None
            if gap:
                delta = 0
                mean = state.prev_mean_rr if state.prev_mean_rr is not None else self.params.rr_rest
                logger.warning("no RR data in window ending at %.3f s; holding previous mean", window_end)
            else:
                mean = mean_rr
                delta = decide_step(mean, state, self.params)
                state = replace(state, prev_mean_rr=mean)
                if self.pin_index is None:
                    state = apply_step(state, delta)
            self._state = state
            row = TimelineRow(
                window_end_s=window_end,
                mean_rr_s=mean,
                normalized_rr=mean / self.params.rr_rest,
                delta=delta,
                indices=list(state.indices),
                gap=gap,
            )
            self._timeline.append(row)
            return row

    def process_stream(self, rr_stream, window_end: float) -> TimelineRow:
        """Close the window ending at window_end using a recorded stream"""
        try:
            mean = window_mean(rr_stream, window_end, self.params.window)
        except NoDataError:
            mean = None
        return self.close_window(window_end, mean)

    def push(self, samples: Sequence[Sequence[float]]) -> List[TimelineRow]:
        """Live ingestion: buffer samples and close every window the newest timestamp has passed"""
        rows = []
        for ts, rr in samples:
            if self._last_ts is not None and ts <= self._last_ts:
                raise ValueError(f"timestamps must be strictly increasing, got {ts} after {self._last_ts}")
            if rr <= 0:
                raise ValueError(f"RR interval must be positive, got {rr}")
            self._buffer.append((float(ts), float(rr)))
            self._last_ts = float(ts)
            if self._next_window_end is None:
                self._next_window_end = window_origin(ts, self.params.window) + self.params.window
            while ts > self._next_window_end:
                rows.append(self.process_stream(self._buffer, self._next_window_end))
                horizon = self._next_window_end
                self._buffer = [s for s in self._buffer if s[0] > horizon]
                self._next_window_end += self.params.window
        return rows


def index_timeline(
    rr_stream,
    params: HrvParams,
    sizes: Union[int, Sequence[int]],
    end: Optional[float] = None,
    pin_index: Optional[int] = None,
    origin: Optional[float] = None,
) -> List[TimelineRow]:
    """
    Offline replay of a recorded stream: one row per consecutive window.

    Windows start at `origin`, by default the grid point at or below the first
    sample, so recordings on a wall or epoch clock do not open with empty windows.
    """
    stream = as_stream(rr_stream)
    if len(stream) == 0:
        raise ValueError("RR stream is empty")
    if np.any(np.diff(stream[:, 0]) <= 0):
        raise ValueError("RR timestamps must be strictly increasing")
    if end is None:
        end = float(stream[-1, 0])
    if origin is None:
        origin = window_origin(float(stream[0, 0]), params.window)
    n_windows = int(math.ceil(round((end - origin) / params.window, _RESOLUTION_DIGITS)))
    if n_windows < 1:
        raise ValueError(f"recording shorter than one window ({params.window:g} s)")
    maker = DecisionMaker(params, sizes, pin_index=pin_index)
    for k in range(1, n_windows + 1):
        maker.process_stream(stream, origin + k * params.window)
    return maker.timeline
