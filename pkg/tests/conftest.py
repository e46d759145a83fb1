# tests/conftest.py - Shared fixtures
import json
import os
import tempfile

# Keep the run registry and outputs of the test session out of the working tree
_TMP = tempfile.mkdtemp(prefix="trajplan-tests-")
os.environ.setdefault("TRAJ_DATABASE_URL", f"sqlite:///{os.path.join(_TMP, 'runs.db')}")
os.environ.setdefault("TRAJ_OUTPUT_DIR", os.path.join(_TMP, "outputs"))

import numpy as np
import pytest

from services.schemas import (
    HrvParams,
    KinematicLimits,
    LadderEntry,
    SolutionLadder,
    TrajectoryProblem,
)


def make_ladder(t_fs, n_intervals: int = 3, waypoints_hash: str = "") -> SolutionLadder:
    """Hand-built ladder: index 1 is the slowest, jerk grows as t_f shrinks"""
    t_fs = sorted(t_fs, reverse=True)
    entries = []
    for k, t_f in enumerate(t_fs, start=1):
        entries.append(
            LadderEntry(
                index=k,
                h=[t_f / n_intervals] * n_intervals,
                t_f=t_f,
                f_time=float(t_f),
                f_jerk=1.0 / t_f**5,
            )
        )
    return SolutionLadder(waypoints_hash=waypoints_hash, requested_size=len(entries), entries=entries)


def rr_stream_from_means(means, window: float = 30.0, per_window: int = 10) -> np.ndarray:
    """Stream whose consecutive windows have exactly the given RR values"""
    rows = []
    for i, mean in enumerate(means):
        start = i * window
        for k in range(1, per_window + 1):
            rows.append((start + k * window / per_window, mean))
    return np.array(rows)


@pytest.fixture
def hrv() -> HrvParams:
    return HrvParams()


@pytest.fixture
def limits() -> KinematicLimits:
    return KinematicLimits(v_max=[2.0], a_max=[8.0], jerk_max=[60.0])


@pytest.fixture
def small_problem(limits) -> TrajectoryProblem:
    return TrajectoryProblem(
        joint_names=["shoulder", "elbow"],
        waypoints=[[0.0, 0.5, 1.0], [0.2, -0.3, 0.4]],
        limits=limits,
    )


@pytest.fixture
def single_joint_problem(limits) -> TrajectoryProblem:
    return TrajectoryProblem(waypoints=[[0.0, 1.0]], limits=limits)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


@pytest.fixture
def write_json(tmp_path):
    def _write(name: str, payload) -> str:
        path = tmp_path / name
        path.write_text(json.dumps(payload), encoding="utf-8")
        return str(path)

    return _write


@pytest.fixture
def write_text(tmp_path):
    def _write(name: str, text: str) -> str:
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return str(path)

    return _write
