# services/harness.py - Closed-loop session simulator and productivity statistics
import logging
import time
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from services.adaptation import DecisionMaker, as_stream
from services.errors import TruncatedSessionError, UndefinedRateError
from services.schemas import (
    ConstantHumanPhase,
    CycleRecord,
    HumanPhaseModel,
    ProfileSegment,
    ReplayRrSource,
    RrSource,
    SessionConfig,
    SessionReport,
    SyntheticRrSource,
)

logger = logging.getLogger(__name__)

# Noisy beats are never shorter than this (s)
MIN_RR_S = 0.2


def _check_profile(segments: Sequence[ProfileSegment], duration: float) -> List[ProfileSegment]:
    segments = sorted(segments, key=lambda s: s.start_s)
    if not segments:
        raise ValueError("RR profile has no segments")
    if segments[0].start_s > 0:
        raise ValueError("RR profile must start at t=0")
    for a, b in zip(segments, segments[1:]):
        if b.start_s > a.end_s:
            raise ValueError(f"RR profile has a hole between {a.end_s} s and {b.start_s} s")
    if segments[-1].end_s < duration:
        raise ValueError(f"RR profile ends at {segments[-1].end_s} s, before {duration} s")
    for s in segments:
        if s.end_s <= s.start_s:
            raise ValueError(f"segment [{s.start_s}, {s.end_s}) is empty")
        end_rr = s.rr_start_s if s.rr_end_s is None else s.rr_end_s
        if s.rr_start_s <= 0 or end_rr <= 0:
            raise ValueError("RR targets must be positive")
    return segments


def _target(segments: List[ProfileSegment], t: float) -> float:
    seg = segments[-1]
    for s in segments:
        if s.start_s <= t < s.end_s:
            seg = s
            break
    end_rr = seg.rr_start_s if seg.rr_end_s is None else seg.rr_end_s
    frac = min(max((t - seg.start_s) / (seg.end_s - seg.start_s), 0.0), 1.0)
    return seg.rr_start_s + frac * (end_rr - seg.rr_start_s)


def synth_rr(
    profile: Union[SyntheticRrSource, Sequence[ProfileSegment]],
    duration: float,
    seed: Optional[int] = None,
    noise: Optional[float] = None,
) -> np.ndarray:
    """
    Beat-by-beat RR stream following a piecewise-linear target profile.

    Each interval starting at time t lasts target(t) plus zero-mean Gaussian
    noise; its timestamp is the beat that ends it. Beats are generated until
    the duration is covered.
    """
    if isinstance(profile, SyntheticRrSource):
        segments = profile.segments
        noise = profile.noise_s if noise is None else noise
        seed = profile.seed if seed is None else seed
    else:
        segments = list(profile)
    noise = noise or 0.0
    segments = _check_profile(segments, duration)
    rng = np.random.default_rng(seed)

    rows = []
    t = 0.0
    while t < duration:
        rr = _target(segments, t)
        if noise > 0:
            rr = max(rr + rng.normal(0.0, noise), MIN_RR_S)
        t += rr
        rows.append((t, rr))
    return np.array(rows)


def resolve_rr_source(source: RrSource, duration: float, seed: int) -> np.ndarray:
    if isinstance(source, ReplayRrSource):
        stream = as_stream(source.samples)
        if len(stream) and np.any(np.diff(stream[:, 0]) <= 0):
            raise ValueError("RR timestamps must be strictly increasing")
        return stream
    return synth_rr(source, duration, seed=source.seed if source.seed is not None else seed)


def compute_stats(cycles: int, errors: int, duration: float) -> Tuple[float, float]:
    """Production rate (cycles per minute) and error rate (errors per cycle)"""
    if cycles < 0 or errors < 0:
        raise ValueError("cycle and error counts must be non-negative")
    if duration <= 0:
        raise ValueError(f"duration must be positive, got {duration}")
    phi = 60.0 * cycles / duration
    if cycles == 0:
        if errors > 0:
            raise UndefinedRateError(f"{errors} errors with no completed cycle")
        return phi, 0.0
    return phi, errors / cycles


class _HumanPhases:
    def __init__(self, model: HumanPhaseModel, rng: np.random.Generator):
        self.model = model
        self.rng = rng

    def next(self) -> float:
        if isinstance(self.model, ConstantHumanPhase):
            return self.model.duration_s
        return float(self.rng.uniform(self.model.low_s, self.model.high_s))


def _report(
    config: SessionConfig, cycles: List[CycleRecord], maker: DecisionMaker, truncated: bool
) -> SessionReport:
    T = config.duration_s
    b = len(cycles)
    errors = sum(1 for t in (config.error_times_s or []) if t <= T)
    try:
        phi, eps = compute_stats(b, errors, T)
    except UndefinedRateError as e:
        logger.warning("error rate undefined: %s", e)
        phi, eps = 60.0 * b / T, None
    return SessionReport(
        condition=config.condition,
        duration_s=T,
        seed=config.seed,
        cycles_completed=b,
        errors=errors,
        production_rate=phi,
        error_rate=eps,
        truncated=truncated,
        index_timeline=maker.timeline,
        cycles=cycles,
    )


def run_session(config: SessionConfig) -> SessionReport:
    """
    Discrete-event simulation of a collaborative session.

    A cycle runs every path once with the ladder entry selected at that path's
    start, then one human phase. Every window the decision maker consumes the
    RR stream; a new index only applies from the next path start. Cycles that
    would end after the session duration are not counted.
    """
    T = config.duration_s
    seeds = np.random.SeedSequence(config.seed).spawn(2)
    stream = resolve_rr_source(config.rr_source, T, int(seeds[1].generate_state(1)[0]))
    last_beat = float(stream[-1, 0]) if len(stream) else float("-inf")
    humans = _HumanPhases(config.human_phase, np.random.default_rng(seeds[0]))

    sizes = [p.ladder.size for p in config.paths]
    for path in config.paths:
        if path.ladder.waypoints_hash and path.ladder.waypoints_hash != path.problem.waypoints_fingerprint():
            raise ValueError("ladder was optimized for different waypoints")
    maker = DecisionMaker(config.hrv, sizes, pin_index=config.pin_index)
    window = config.hrv.window

    cycles: List[CycleRecord] = []
    next_window = window
    clock = 0.0

    def pace(seconds: float):
        if config.realtime_factor:
            time.sleep(seconds / config.realtime_factor)

    def advance_windows(until: float):
        nonlocal next_window
        while next_window <= min(until, T) + 1e-9:
            if next_window - window >= last_beat:
                raise TruncatedSessionError(
                    f"RR source exhausted at {last_beat:.3f} s, before {T:.3f} s",
                    _report(config, cycles, maker, truncated=True),
                )
            maker.process_stream(stream, next_window)
            next_window += window

    while True:
        start = clock
        robot_time = 0.0
        used = []
        finished = True
        for p, path in enumerate(config.paths):
            advance_windows(clock)
            k = maker.current_indices()[p]
            t_f = path.ladder.entry(k).t_f
            if clock + t_f > T:
                finished = False
                break
            pace(t_f)
            clock += t_f
            robot_time += t_f
            used.append(k)
        if not finished:
            break
        human = humans.next()
        if clock + human > T:
            break
        pace(human)
        clock += human
        cycles.append(
            CycleRecord(
                cycle=len(cycles) + 1,
                start_s=start,
                end_s=clock,
                execution_time_s=robot_time,
                human_time_s=human,
                indices=used,
            )
        )

    advance_windows(T)
    report = _report(config, cycles, maker, truncated=False)
    logger.info(
        "session %s: %d cycles in %.0f s, production rate %.3f/min",
        config.condition, report.cycles_completed, T, report.production_rate,
    )
    return report


def compare_conditions(config: SessionConfig) -> Dict[str, SessionReport]:
    """
    The same session under (a) min-time, (b) min-jerk and (c) adaptive selection,
    sharing human phases and RR source.
    """
    top = max(p.ladder.size for p in config.paths)
    variants = {
        "a_min_time": config.model_copy(update={"pin_index": top, "condition": "a_min_time"}),
        "b_min_jerk": config.model_copy(update={"pin_index": 1, "condition": "b_min_jerk"}),
        "c_adaptive": config.model_copy(update={"pin_index": None, "condition": "c_adaptive"}),
    }
    return {name: run_session(cfg) for name, cfg in variants.items()}
