# services/file_formats.py - Readers and writers for waypoints, limits, RR streams, ladders and reports
import csv
import io
import logging
from pathlib import Path
from typing import Iterable, List, Literal, Optional, Sequence, Tuple, Type, TypeVar, Union

import numpy as np
from pydantic import BaseModel, Field, ValidationError

from services.adaptation import calibrate_rest
from services.errors import InputFormatError
from services.schemas import (
    BoundaryConditions,
    CycleRecord,
    HrvParams,
    HumanPhaseModel,
    ConstantHumanPhase,
    KinematicLimits,
    ReplayRrSource,
    SessionConfig,
    SessionPath,
    SolutionLadder,
    SyntheticRrSource,
    TimelineRow,
    TrajectoryProblem,
)
from services.spline_core import TrajectorySamples

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"
M = TypeVar("M", bound=BaseModel)


def _fmt(value: float) -> str:
    return FLOAT_FORMAT % value


def _read_text(path: Union[str, Path]) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise InputFormatError(str(path), f"cannot read file ({e.strerror})") from e


def _validation_field(error: ValidationError) -> str:
    first = error.errors()[0]
    return ".".join(str(part) for part in first.get("loc", ())) or "<root>"


def parse_model(model: Type[M], payload: Union[str, dict], source: str = "payload") -> M:
    """Validate a JSON text or dict into a pydantic model, naming the offending field on failure"""
    try:
        if isinstance(payload, str):
            return model.model_validate_json(payload)
        return model.model_validate(payload)
    except ValidationError as e:
        raise InputFormatError(f"{source}:{_validation_field(e)}", e.errors()[0]["msg"]) from e


def write_model(path: Union[str, Path], model: BaseModel) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(model.model_dump_json(indent=2) + "\n", encoding="utf-8")
    return path


def _rows(text: str) -> List[List[str]]:
    return [row for row in csv.reader(io.StringIO(text)) if row and any(cell.strip() for cell in row)]


def _numeric_rows(rows: List[List[str]], source: str) -> Tuple[Optional[List[str]], np.ndarray]:
    """Split an optional header row from numeric data"""
    header = None
    if rows:
        try:
            [float(cell) for cell in rows[0]]
        except ValueError:
            header = [cell.strip() for cell in rows[0]]
            rows = rows[1:]
    data = []
    for line_no, row in enumerate(rows, start=2 if header else 1):
        try:
            data.append([float(cell) for cell in row])
        except ValueError as e:
            raise InputFormatError(f"{source}:row {line_no}", f"non-numeric value ({e})") from e
    widths = {len(r) for r in data}
    if len(widths) > 1:
        raise InputFormatError(source, f"rows have different column counts {sorted(widths)}")
    return header, np.array(data, dtype=float)


class JointWaypoints(BaseModel):
    name: str
    waypoints: List[float]


class WaypointFile(BaseModel):
    """JSON waypoint schema: named joints, optional boundary conditions"""

    joints: List[JointWaypoints] = Field(min_length=1)
    boundary: BoundaryConditions = Field(default_factory=BoundaryConditions)


def read_waypoints(path: Union[str, Path]) -> Tuple[List[str], List[List[float]], BoundaryConditions]:
    """
    Waypoints from CSV (one row per waypoint, one column per joint, optional
    header of joint names) or JSON (WaypointFile).
    """
    path = Path(path)
    text = _read_text(path)
    if path.suffix.lower() == ".json":
        parsed = parse_model(WaypointFile, text, str(path))
        return [j.name for j in parsed.joints], [j.waypoints for j in parsed.joints], parsed.boundary

    header, data = _numeric_rows(_rows(text), str(path))
    if data.size == 0:
        raise InputFormatError(str(path), "no waypoint rows")
    names = header or [f"joint_{j + 1}" for j in range(data.shape[1])]
    if len(names) != data.shape[1]:
        raise InputFormatError(f"{path}:header", "header and data disagree on the joint count")
    return names, data.T.tolist(), BoundaryConditions()


def read_limits(path: Union[str, Path]) -> KinematicLimits:
    """JSON with v_max, a_max, jerk_max: one value per joint or a single shared value"""
    return parse_model(KinematicLimits, _read_text(path), str(path))


def load_problem(waypoints_path: Union[str, Path], limits_path: Union[str, Path]) -> TrajectoryProblem:
    names, waypoints, boundary = read_waypoints(waypoints_path)
    limits = read_limits(limits_path)
    payload = {
        "joint_names": names,
        "waypoints": waypoints,
        "limits": limits.model_dump(),
        "boundary": boundary.model_dump(),
    }
    return parse_model(TrajectoryProblem, payload, f"{waypoints_path}+{limits_path}")


def problem_from_waypoints(waypoints_path: Union[str, Path]) -> TrajectoryProblem:
    """Problem without kinematic limits; enough for trajectory synthesis"""
    names, waypoints, boundary = read_waypoints(waypoints_path)
    return TrajectoryProblem(joint_names=names, waypoints=waypoints, boundary=boundary)


def parse_rr_csv(text: str, source: str = "rr") -> np.ndarray:
    """`timestamp_s, rr_s` rows with strictly increasing timestamps"""
    header, data = _numeric_rows(_rows(text), source)
    if data.size == 0:
        return np.empty((0, 2))
    if data.shape[1] != 2:
        raise InputFormatError(source, f"expected 2 columns (timestamp_s, rr_s), got {data.shape[1]}")
    bad = np.flatnonzero(np.diff(data[:, 0]) <= 0)
    if bad.size:
        first_line = 3 if header else 2
        raise InputFormatError(f"{source}:row {bad[0] + first_line}", "timestamps must be strictly increasing")
    if np.any(data[:, 1] <= 0):
        raise InputFormatError(f"{source}:rr_s", "RR intervals must be positive")
    return data


def read_rr_csv(path: Union[str, Path]) -> np.ndarray:
    return parse_rr_csv(_read_text(path), str(path))


def read_error_log(path: Union[str, Path]) -> List[float]:
    """One error timestamp (s) per row"""
    _, data = _numeric_rows(_rows(_read_text(path)), str(path))
    return [] if data.size == 0 else data[:, 0].tolist()


def read_ladder(path: Union[str, Path]) -> SolutionLadder:
    return parse_model(SolutionLadder, _read_text(path), str(path))


def _write_csv(path: Union[str, Path], header: Sequence[str], rows: Iterable[Sequence[str]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows(rows)
    return path


def trajectory_header(joint_names: Sequence[str]) -> List[str]:
    header = ["t"]
    for prefix in ("q", "qd", "qdd", "qddd"):
        header += [f"{prefix}_{name}" for name in joint_names]
    return header


def write_trajectory_csv(path: Union[str, Path], samples: TrajectorySamples, joint_names: Sequence[str]) -> Path:
    header = trajectory_header(joint_names)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, samples.as_table(), fmt=FLOAT_FORMAT, delimiter=",", header=",".join(header), comments="")
    return path


def timeline_rows(rows: Sequence[TimelineRow]) -> Tuple[List[str], List[List[str]]]:
    n_paths = len(rows[0].indices) if rows else 1
    header = ["window_end_s", "mean_rr_s", "normalized_rr", "delta", "index"]
    header += [f"index_path{p + 1}" for p in range(1, n_paths)]
    header.append("gap")
    body = []
    for r in rows:
        body.append(
            [_fmt(r.window_end_s), _fmt(r.mean_rr_s), _fmt(r.normalized_rr), str(r.delta)]
            + [str(k) for k in r.indices]
            + [str(int(r.gap))]
        )
    return header, body


def write_timeline_csv(path: Union[str, Path], rows: Sequence[TimelineRow]) -> Path:
    header, body = timeline_rows(rows)
    return _write_csv(path, header, body)


def write_cycles_csv(path: Union[str, Path], cycles: Sequence[CycleRecord]) -> Path:
    header = ["cycle", "start_s", "end_s", "execution_time_s", "human_time_s", "indices"]
    body = [
        [str(c.cycle), _fmt(c.start_s), _fmt(c.end_s), _fmt(c.execution_time_s), _fmt(c.human_time_s),
         " ".join(str(k) for k in c.indices)]
        for c in cycles
    ]
    return _write_csv(path, header, body)


class FileRrSource(BaseModel):
    kind: Literal["file"] = "file"
    path: str


class SessionPathFile(BaseModel):
    waypoints: str
    limits: str
    ladder: str


class SessionConfigFile(BaseModel):
    """On-disk session schema; paths are relative to the config file"""

    duration_s: float = Field(default=600.0, gt=0)
    seed: int = 0
    paths: List[SessionPathFile] = Field(min_length=1)
    human_phase: HumanPhaseModel = Field(default_factory=ConstantHumanPhase, discriminator="kind")
    rr_source: Union[SyntheticRrSource, FileRrSource] = Field(discriminator="kind")
    hrv: dict = Field(default_factory=dict)
    baseline: Optional[str] = None
    pin_index: Optional[int] = None
    error_log: Optional[str] = None
    realtime_factor: Optional[float] = None


def session_input_files(config_path: Union[str, Path]) -> List[Path]:
    """Every file a session config refers to, for the run manifest"""
    config_path = Path(config_path)
    raw = parse_model(SessionConfigFile, _read_text(config_path), str(config_path))
    base = config_path.parent
    files = [config_path]
    for p in raw.paths:
        files += [base / p.waypoints, base / p.limits, base / p.ladder]
    for extra in (getattr(raw.rr_source, "path", None), raw.baseline, raw.error_log):
        if extra:
            files.append(base / extra)
    return files


def load_session_config(config_path: Union[str, Path], hrv_overrides: Optional[dict] = None) -> SessionConfig:
    config_path = Path(config_path)
    raw = parse_model(SessionConfigFile, _read_text(config_path), str(config_path))
    base = config_path.parent

    paths = []
    for p in raw.paths:
        problem = load_problem(base / p.waypoints, base / p.limits)
        ladder = read_ladder(base / p.ladder)
        paths.append(SessionPath(problem=problem, ladder=ladder))

    hrv = dict(raw.hrv)
    if raw.baseline:
        rr_rest, _ = calibrate_rest(read_rr_csv(base / raw.baseline))
        hrv["rr_rest"] = rr_rest
        logger.info("rest level calibrated from %s: %.4f s", raw.baseline, rr_rest)
    hrv.update(hrv_overrides or {})

    if isinstance(raw.rr_source, FileRrSource):
        rr_source = ReplayRrSource(samples=read_rr_csv(base / raw.rr_source.path).tolist())
    else:
        rr_source = raw.rr_source

    payload = {
        "duration_s": raw.duration_s,
        "seed": raw.seed,
        "paths": paths,
        "human_phase": raw.human_phase,
        "rr_source": rr_source,
        "hrv": parse_model(HrvParams, hrv, f"{config_path}:hrv"),
        "pin_index": raw.pin_index,
        "error_times_s": read_error_log(base / raw.error_log) if raw.error_log else None,
        "realtime_factor": raw.realtime_factor,
    }
    try:
        return SessionConfig(**payload)
    except ValidationError as e:
        raise InputFormatError(f"{config_path}:{_validation_field(e)}", e.errors()[0]["msg"]) from e