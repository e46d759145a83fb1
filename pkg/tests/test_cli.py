import csv
import json

import numpy as np
import pytest
from scipy.integrate import trapezoid

from cli import EXIT_INFEASIBLE, EXIT_INPUT, EXIT_OK, main
from config.settings import settings
from database.models import RunRecord, SessionLocal
from tests.conftest import make_ladder, rr_stream_from_means

WAYPOINTS_CSV = "shoulder,elbow\n0,0.2\n0.5,-0.3\n1,0.4\n"
LIMITS = {"v_max": [2.0], "a_max": [8.0], "jerk_max": [60.0]}
SMALL_RUN = ["--population", "16", "--generations", "12", "--seed", "5"]


def read_csv(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def write_rr(path, stream):
    lines = ["timestamp_s,rr_s"] + [f"{float(t)!r},{float(rr)!r}" for t, rr in stream]
    path.write_text("\n".join(lines) + "\n")
    return str(path)


@pytest.fixture(scope="module")
def problem_files(tmp_path_factory):
    root = tmp_path_factory.mktemp("problem")
    (root / "waypoints.csv").write_text(WAYPOINTS_CSV)
    (root / "limits.json").write_text(json.dumps(LIMITS))
    return root


@pytest.fixture(scope="module")
def optimized(problem_files):
    out = problem_files / "run1"
    code = main(
        ["optimize", str(problem_files / "waypoints.csv"), str(problem_files / "limits.json")]
        + SMALL_RUN
        + ["--ladder-size", "5", "--out-dir", str(out)]
    )
    assert code == EXIT_OK
    return out


class TestOptimize:
    def test_outputs_written(self, optimized):
        assert {p.name for p in optimized.iterdir()} == {"front.json", "ladder.json", "manifest.json"}
        manifest = json.loads((optimized / "manifest.json").read_text())
        assert manifest["command"] == "optimize"
        assert manifest["seed"] == 5
        assert set(manifest["inputs"]) == {"waypoints", "limits"}
        assert manifest["overrides"]["ladder_size"] == 5

    def test_rerun_is_identical(self, problem_files, optimized):
        out = problem_files / "run2"
        code = main(
            ["optimize", str(problem_files / "waypoints.csv"), str(problem_files / "limits.json")]
            + SMALL_RUN
            + ["--ladder-size", "5", "--out-dir", str(out)]
        )
        assert code == EXIT_OK
        for name in ("front.json", "ladder.json", "manifest.json"):
            assert (out / name).read_bytes() == (optimized / name).read_bytes()

    def test_two_entries_are_the_extremes(self, problem_files, tmp_path):
        code = main(
            ["optimize", str(problem_files / "waypoints.csv"), str(problem_files / "limits.json")]
            + SMALL_RUN
            + ["--ladder-size", "2", "--out-dir", str(tmp_path)]
        )
        assert code == EXIT_OK
        front = json.loads((tmp_path / "front.json").read_text())["points"]
        entries = json.loads((tmp_path / "ladder.json").read_text())["entries"]
        assert entries[0]["f_jerk"] == min(p["f_jerk"] for p in front)
        assert entries[-1]["f_time"] == min(p["f_time"] for p in front)

    def test_infeasible_limits(self, problem_files, tmp_path):
        limits = tmp_path / "tight.json"
        limits.write_text(json.dumps({"v_max": [2.0], "a_max": [8.0], "jerk_max": [1e-6]}))
        code = main(
            ["optimize", str(problem_files / "waypoints.csv"), str(limits)]
            + ["--population", "8", "--generations", "2", "--out-dir", str(tmp_path / "out")]
        )
        assert code == EXIT_INFEASIBLE

    def test_malformed_limits(self, problem_files, tmp_path):
        limits = tmp_path / "broken.json"
        limits.write_text(json.dumps({"v_max": [2.0]}))
        code = main(["optimize", str(problem_files / "waypoints.csv"), str(limits), "--out-dir", str(tmp_path)])
        assert code == EXIT_INPUT

    def test_record_stores_manifest(self, problem_files, tmp_path):
        code = main(
            ["optimize", str(problem_files / "waypoints.csv"), str(problem_files / "limits.json")]
            + ["--population", "8", "--generations", "2", "--ladder-size", "3", "--out-dir", str(tmp_path), "--record"]
        )
        assert code == EXIT_OK
        db = SessionLocal()
        try:
            record = db.query(RunRecord).filter(RunRecord.output_dir == str(tmp_path)).one()
        finally:
            db.close()
        assert record.command == "optimize"
        assert record.manifest["overrides"]["population"] == 8


class TestPlan:
    def plan(self, problem_files, optimized, out, index, rate="200"):
        return main(
            ["plan", str(problem_files / "waypoints.csv"), str(optimized / "ladder.json")]
            + ["--index", str(index), "--rate", rate, "--out-dir", str(out)]
        )

    def test_first_row_is_first_waypoint(self, problem_files, optimized, tmp_path):
        assert self.plan(problem_files, optimized, tmp_path, 1) == EXIT_OK
        rows = read_csv(tmp_path / "trajectory_k1.csv")
        assert float(rows[0]["t"]) == 0.0
        assert float(rows[0]["q_shoulder"]) == pytest.approx(0.0, abs=1e-12)
        assert float(rows[0]["q_elbow"]) == pytest.approx(0.2, abs=1e-12)
        assert float(rows[-1]["q_elbow"]) == pytest.approx(0.4, abs=1e-9)

    def test_min_jerk_end_is_smoother(self, problem_files, optimized, tmp_path):
        ladder = json.loads((optimized / "ladder.json").read_text())
        n = len(ladder["entries"])
        assert n >= 2
        totals = []
        for k in (1, n):
            assert self.plan(problem_files, optimized, tmp_path, k, rate="1000") == EXIT_OK
            table = np.loadtxt(tmp_path / f"trajectory_k{k}.csv", delimiter=",", skiprows=1)
            jerk = table[:, -2:]
            totals.append(trapezoid(np.sum(jerk**2, axis=1), table[:, 0]))
        assert totals[0] < totals[1]

    @pytest.mark.parametrize("index", [0, 6])
    def test_index_out_of_range(self, problem_files, optimized, tmp_path, index):
        assert self.plan(problem_files, optimized, tmp_path, index) == EXIT_INPUT

    def test_ladder_of_other_waypoints(self, problem_files, optimized, tmp_path):
        other = tmp_path / "other.csv"
        other.write_text("shoulder,elbow\n0,0.2\n0.6,-0.3\n1,0.4\n")
        code = main(["plan", str(other), str(optimized / "ladder.json"), "--index", "1", "--out-dir", str(tmp_path)])
        assert code == EXIT_INPUT


class TestAdapt:
    @pytest.fixture
    def ladder_path(self, tmp_path):
        path = tmp_path / "ladder.json"
        path.write_text(make_ladder([4.0 + 0.5 * k for k in range(15)]).model_dump_json())
        return str(path)

    def test_worked_stream(self, tmp_path, ladder_path):
        rr = write_rr(tmp_path / "rr.csv", rr_stream_from_means([0.80, 0.74, 0.77, 0.80, 0.79]))
        assert main(["adapt", rr, ladder_path, "--out-dir", str(tmp_path / "out")]) == EXIT_OK
        rows = read_csv(tmp_path / "out" / "timeline.csv")
        assert [int(r["delta"]) for r in rows] == [0, -2, 3, 3, 0]
        assert [int(r["index"]) for r in rows] == [8, 6, 9, 12, 12]

    def test_constant_stream(self, tmp_path, ladder_path):
        rr = write_rr(tmp_path / "rr.csv", rr_stream_from_means([0.8] * 8))
        assert main(["adapt", rr, ladder_path, "--out-dir", str(tmp_path)]) == EXIT_OK
        assert {r["index"] for r in read_csv(tmp_path / "timeline.csv")} == {"8"}

    def test_gap_is_flagged(self, tmp_path, ladder_path):
        stream = rr_stream_from_means([0.8, 0.8, 0.8])
        stream = stream[(stream[:, 0] <= 30.0) | (stream[:, 0] > 60.0)]
        rr = write_rr(tmp_path / "rr.csv", stream)
        assert main(["adapt", rr, ladder_path, "--out-dir", str(tmp_path)]) == EXIT_OK
        assert [r["gap"] for r in read_csv(tmp_path / "timeline.csv")] == ["0", "1", "0"]

    def test_window_override(self, tmp_path, ladder_path):
        rr = write_rr(tmp_path / "rr.csv", rr_stream_from_means([0.8] * 4))
        assert main(["adapt", rr, ladder_path, "--window", "60", "--out-dir", str(tmp_path)]) == EXIT_OK
        assert len(read_csv(tmp_path / "timeline.csv")) == 2
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["overrides"] == {"window": 60.0}

    def test_empty_stream(self, tmp_path, ladder_path):
        rr = tmp_path / "rr.csv"
        rr.write_text("timestamp_s,rr_s\n")
        assert main(["adapt", str(rr), ladder_path, "--out-dir", str(tmp_path)]) == EXIT_INPUT

    def test_recording_shorter_than_one_window(self, tmp_path, ladder_path):
        rr = tmp_path / "rr.csv"
        rr.write_text("timestamp_s,rr_s\n0.0,0.8\n")
        assert main(["adapt", str(rr), ladder_path, "--out-dir", str(tmp_path)]) == EXIT_INPUT
        assert not (tmp_path / "timeline.csv").exists()

    def test_setting_override_reaches_manifest(self, tmp_path, ladder_path, monkeypatch):
        rr = write_rr(tmp_path / "rr.csv", rr_stream_from_means([0.8] * 3))
        assert main(["adapt", rr, ladder_path, "--out-dir", str(tmp_path / "default")]) == EXIT_OK
        monkeypatch.setattr(settings, "DELTA_RS", 0.05)
        assert main(["adapt", rr, ladder_path, "--out-dir", str(tmp_path / "changed")]) == EXIT_OK
        default = json.loads((tmp_path / "default" / "manifest.json").read_text())
        changed = json.loads((tmp_path / "changed" / "manifest.json").read_text())
        assert default["overrides"] == {}
        assert changed["overrides"] == {"TRAJ_DELTA_RS": 0.05}


class TestSimulate:
    @pytest.fixture
    def config_path(self, tmp_path):
        (tmp_path / "wp.csv").write_text("a\n0\n0.5\n1\n")
        (tmp_path / "limits.json").write_text(json.dumps(LIMITS))
        (tmp_path / "ladder.json").write_text(make_ladder([4.0 + 0.5 * k for k in range(15)]).model_dump_json())
        config = {
            "duration_s": 300,
            "seed": 4,
            "paths": [{"waypoints": "wp.csv", "limits": "limits.json", "ladder": "ladder.json"}],
            "human_phase": {"kind": "uniform", "low_s": 2.0, "high_s": 4.0},
            "rr_source": {"kind": "synthetic", "segments": [{"start_s": 0, "end_s": 400, "rr_start_s": 0.8}]},
        }
        path = tmp_path / "session.json"
        path.write_text(json.dumps(config))
        return str(path)

    def test_pinned_session(self, tmp_path, config_path):
        out = tmp_path / "out"
        assert main(["simulate", config_path, "--pin-index", "3", "--out-dir", str(out)]) == EXIT_OK
        report = json.loads((out / "report.json").read_text())
        assert report["condition"] == "pinned_3"
        assert {c["indices"][0] for c in report["cycles"]} == {3}
        assert report["production_rate"] == pytest.approx(60.0 * report["cycles_completed"] / 300)
        assert len(read_csv(out / "cycles.csv")) == report["cycles_completed"]

    def test_conditions(self, tmp_path, config_path):
        out = tmp_path / "out"
        assert main(["simulate", config_path, "--conditions", "--out-dir", str(out)]) == EXIT_OK
        rates = {}
        for name in ("a_min_time", "b_min_jerk", "c_adaptive"):
            rates[name] = json.loads((out / f"report_{name}.json").read_text())["production_rate"]
            assert (out / f"timeline_{name}.csv").exists()
        assert rates["a_min_time"] > rates["b_min_jerk"]

    def test_truncated_replay_writes_partial_report(self, tmp_path):
        (tmp_path / "wp.csv").write_text("a\n0\n1\n")
        (tmp_path / "limits.json").write_text(json.dumps(LIMITS))
        (tmp_path / "ladder.json").write_text(make_ladder([6.0, 5.0], n_intervals=3).model_dump_json())
        write_rr(tmp_path / "rr.csv", rr_stream_from_means([0.8, 0.8]))
        config = {
            "duration_s": 300,
            "paths": [{"waypoints": "wp.csv", "limits": "limits.json", "ladder": "ladder.json"}],
            "rr_source": {"kind": "file", "path": "rr.csv"},
        }
        (tmp_path / "session.json").write_text(json.dumps(config))
        out = tmp_path / "out"
        assert main(["simulate", str(tmp_path / "session.json"), "--out-dir", str(out)]) == EXIT_INPUT
        assert json.loads((out / "report_partial.json").read_text())["truncated"] is True
        assert not (out / "manifest.json").exists()
