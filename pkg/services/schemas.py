# services/schemas.py - Pydantic models for problems, ladders, HRV parameters and reports
import hashlib
import json
from typing import Any, Dict, List, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, Field, PositiveFloat, model_validator

from config.settings import settings


def fingerprint(payload: Any) -> str:
    """sha256 of the canonical JSON form of a payload"""
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class KinematicLimits(BaseModel):
    v_max: List[PositiveFloat]  # rad/s
    a_max: List[PositiveFloat]  # rad/s^2
    jerk_max: List[PositiveFloat]  # rad/s^3

    def broadcast(self, n_joints: int) -> "KinematicLimits":
        """Expand single-value limits to every joint"""
        values = {}
        for name in ("v_max", "a_max", "jerk_max"):
            seq = getattr(self, name)
            if len(seq) == 1:
                seq = seq * n_joints
            if len(seq) != n_joints:
                raise ValueError(f"{name} has {len(seq)} entries for {n_joints} joints")
            values[name] = seq
        return KinematicLimits(**values)

    def as_array(self) -> np.ndarray:
        """Rows: velocity, acceleration, jerk bounds; one column per joint"""
        return np.array([self.v_max, self.a_max, self.jerk_max], dtype=float)


class BoundaryConditions(BaseModel):
    """Initial/final velocity, acceleration and jerk per joint; empty lists mean zero"""

    velocity_start: List[float] = Field(default_factory=list)
    velocity_end: List[float] = Field(default_factory=list)
    acceleration_start: List[float] = Field(default_factory=list)
    acceleration_end: List[float] = Field(default_factory=list)
    jerk_start: List[float] = Field(default_factory=list)
    jerk_end: List[float] = Field(default_factory=list)

    def as_array(self, n_joints: int) -> np.ndarray:
        """Array of shape (2, 3, D): [start|end][velocity|acceleration|jerk][joint]"""
        out = np.zeros((2, 3, n_joints))
        for end, suffix in enumerate(("start", "end")):
            for order, quantity in enumerate(("velocity", "acceleration", "jerk")):
                values = getattr(self, f"{quantity}_{suffix}")
                if values:
                    if len(values) != n_joints:
                        raise ValueError(f"{quantity}_{suffix} has {len(values)} entries for {n_joints} joints")
                    out[end, order] = values
        return out


class TrajectoryProblem(BaseModel):
    """Full planning input: waypoints per joint, kinematic limits and boundary conditions"""

    joint_names: List[str] = Field(default_factory=list)
    waypoints: List[List[float]]  # D lists of W values (rad)
    limits: Optional[KinematicLimits] = None  # required for optimization only
    boundary: BoundaryConditions = Field(default_factory=BoundaryConditions)

    @model_validator(mode="after")
    def _check_shape(self):
        if not self.waypoints:
            raise ValueError("at least one joint is required")
        counts = {len(w) for w in self.waypoints}
        if len(counts) != 1:
            raise ValueError(f"all joints must share the same waypoint count, got {sorted(counts)}")
        if counts.pop() < 2:
            raise ValueError("at least two waypoints are required")
        if not self.joint_names:
            self.joint_names = [f"joint_{j + 1}" for j in range(len(self.waypoints))]
        elif len(self.joint_names) != len(self.waypoints):
            raise ValueError("joint_names and waypoints disagree on the joint count")
        if self.limits is not None:
            self.limits = self.limits.broadcast(len(self.waypoints))
        self.boundary.as_array(len(self.waypoints))
        return self

    @property
    def n_joints(self) -> int:
        return len(self.waypoints)

    @property
    def n_waypoints(self) -> int:
        return len(self.waypoints[0])

    def waypoint_array(self) -> np.ndarray:
        """Shape (D, W)"""
        return np.array(self.waypoints, dtype=float)

    def boundary_array(self) -> np.ndarray:
        return self.boundary.as_array(self.n_joints)

    def require_limits(self) -> KinematicLimits:
        if self.limits is None:
            raise ValueError("kinematic limits are required")
        return self.limits

    def fingerprint(self) -> str:
        return fingerprint(self.model_dump(mode="json"))

    def waypoints_fingerprint(self) -> str:
        return fingerprint({"waypoints": self.waypoints, "boundary": self.boundary.model_dump(mode="json")})


class ObjectivePoint(BaseModel):
    h: List[float]
    f_time: float
    f_jerk: float
    feasible: bool
    violation: float = 0.0


class GenerationStats(BaseModel):
    generation: int
    hypervolume: float
    feasible_count: int
    best_violation: float


class ParetoFront(BaseModel):
    problem_hash: str
    seed: int
    population: int
    generations: int
    points: List[ObjectivePoint]
    history: List[GenerationStats] = Field(default_factory=list)
    reference_point: List[float] = Field(default_factory=list)


class LadderEntry(BaseModel):
    index: int  # 1 = min-jerk ... n = min-time
    h: List[float]
    t_f: float
    f_time: float
    f_jerk: float
    feasible: bool = True
    violation: float = 0.0


class SolutionLadder(BaseModel):
    problem_hash: str = ""
    waypoints_hash: str = ""
    seed: Optional[int] = None
    requested_size: int
    truncated: bool = False
    entries: List[LadderEntry]

    @model_validator(mode="after")
    def _check_order(self):
        if not self.entries:
            raise ValueError("ladder has no entries")
        for lower, upper in zip(self.entries, self.entries[1:]):
            if not (upper.f_time < lower.f_time and upper.f_jerk > lower.f_jerk):
                raise ValueError(
                    f"ladder entries {lower.index} and {upper.index} break the time/jerk ordering"
                )
        return self

    @property
    def size(self) -> int:
        return len(self.entries)

    def entry(self, index: int) -> LadderEntry:
        """1-based access"""
        if not 1 <= index <= self.size:
            raise IndexError(f"ladder index {index} outside [1, {self.size}]")
        return self.entries[index - 1]


class HrvParams(BaseModel):
    """Thresholds and reference levels of the HRV decision maker (seconds)"""

    delta_rs: PositiveFloat = settings.DELTA_RS
    delta_sr: PositiveFloat = settings.DELTA_SR
    rr_rest: PositiveFloat = settings.RR_REST_S
    rr_stress: Optional[PositiveFloat] = None
    sigma_rest: float = Field(default=settings.SIGMA_REST_S, ge=0)
    sigma_stress: float = Field(default=settings.SIGMA_STRESS_S, ge=0)
    window: PositiveFloat = settings.WINDOW_S

    @model_validator(mode="after")
    def _check_levels(self):
        if self.rr_stress is None:
            self.rr_stress = self.rr_rest - settings.RR_STRESS_OFFSET_S
        if not 0 < self.rr_stress < self.rr_rest:
            raise ValueError(f"need 0 < rr_stress < rr_rest, got {self.rr_stress} and {self.rr_rest}")
        return self

    @property
    def rr_stress_max(self) -> float:
        return self.rr_stress - self.sigma_stress


class ConstantHumanPhase(BaseModel):
    kind: Literal["constant"] = "constant"
    duration_s: float = Field(default=0.0, ge=0)


class UniformHumanPhase(BaseModel):
    kind: Literal["uniform"] = "uniform"
    low_s: float = Field(ge=0)
    high_s: float = Field(ge=0)

    @model_validator(mode="after")
    def _check_range(self):
        if self.high_s < self.low_s:
            raise ValueError("high_s must not be below low_s")
        return self


HumanPhaseModel = Union[ConstantHumanPhase, UniformHumanPhase]


class ProfileSegment(BaseModel):
    """Target RR ramping linearly from rr_start_s to rr_end_s over [start_s, end_s)"""

    start_s: float = Field(ge=0)
    end_s: float
    rr_start_s: float
    rr_end_s: Optional[float] = None


class SyntheticRrSource(BaseModel):
    kind: Literal["synthetic"] = "synthetic"
    segments: List[ProfileSegment]
    noise_s: float = Field(default=0.0, ge=0)
    seed: Optional[int] = None


class ReplayRrSource(BaseModel):
    kind: Literal["replay"] = "replay"
    samples: List[List[float]]  # (timestamp_s, rr_s) rows


RrSource = Union[SyntheticRrSource, ReplayRrSource]


class SessionPath(BaseModel):
    problem: TrajectoryProblem
    ladder: SolutionLadder


class SessionConfig(BaseModel):
    duration_s: PositiveFloat = 600.0
    paths: List[SessionPath] = Field(min_length=1)
    human_phase: HumanPhaseModel = Field(default_factory=ConstantHumanPhase, discriminator="kind")
    rr_source: RrSource = Field(discriminator="kind")
    hrv: HrvParams = Field(default_factory=HrvParams)
    seed: int = 0
    pin_index: Optional[int] = None
    error_times_s: Optional[List[float]] = None
    realtime_factor: Optional[PositiveFloat] = None
    condition: str = "adaptive"


class TimelineRow(BaseModel):
    window_end_s: float
    mean_rr_s: float
    normalized_rr: float
    delta: int
    indices: List[int]
    gap: bool = False

    @property
    def index(self) -> int:
        return self.indices[0]


class CycleRecord(BaseModel):
    cycle: int
    start_s: float
    end_s: float
    execution_time_s: float  # robot phase, gamma
    human_time_s: float
    indices: List[int]


class SessionReport(BaseModel):
    condition: str
    duration_s: float
    seed: int
    cycles_completed: int
    errors: int
    production_rate: float  # boxes per minute
    error_rate: Optional[float]  # errors per cycle; None when undefined
    truncated: bool = False
    index_timeline: List[TimelineRow] = Field(default_factory=list)
    cycles: List[CycleRecord] = Field(default_factory=list)


class RunManifest(BaseModel):
    command: str
    inputs: Dict[str, str] = Field(default_factory=dict)  # name -> sha256
    seed: Optional[int] = None
    overrides: Dict[str, Any] = Field(default_factory=dict)
    version: str
    outputs: Dict[str, str] = Field(default_factory=dict)
