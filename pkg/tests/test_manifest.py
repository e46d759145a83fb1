import pytest

from config.settings import Settings
from services.manifest import build_manifest, settings_overrides


@pytest.fixture
def rr_file(write_text):
    return write_text("rr.csv", "timestamp_s,rr_s\n0.8,0.8\n1.6,0.8\n")


class TestSettingsOverrides:
    def test_defaults_record_nothing(self):
        assert settings_overrides(Settings()) == {}

    def test_environment_value_is_recorded(self, monkeypatch):
        monkeypatch.setenv("TRAJ_DELTA_RS", "0.05")
        assert settings_overrides(Settings()) == {"TRAJ_DELTA_RS": 0.05}

    def test_placement_settings_are_ignored(self):
        config = Settings(EVAL_WORKERS=4, LOG_LEVEL="DEBUG", OUTPUT_DIR="elsewhere", DATABASE_URL="sqlite://")
        assert settings_overrides(config) == {}


class TestBuildManifest:
    def test_settings_and_flags_are_merged(self, rr_file):
        manifest = build_manifest(
            "adapt", {"rr": rr_file}, overrides={"window": 60.0, "pin_index": None}, config=Settings(DELTA_RS=0.05)
        )
        assert manifest.overrides == {"TRAJ_DELTA_RS": 0.05, "window": 60.0}

    def test_different_settings_give_different_manifests(self, rr_file):
        low = build_manifest("adapt", {"rr": rr_file}, config=Settings(DELTA_RS=0.02))
        high = build_manifest("adapt", {"rr": rr_file}, config=Settings(DELTA_RS=0.05))
        assert low.inputs == high.inputs
        assert low != high
