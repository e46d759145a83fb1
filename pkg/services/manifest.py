# services/manifest.py - Run manifests and the run registry
import hashlib
import logging
from pathlib import Path
from typing import Any, Callable, Dict, Mapping, Optional, Union

from sqlalchemy.orm import Session

from config.settings import VERSION, Settings, settings
from database.models import RunRecord, SessionLocal
from services.file_formats import write_model
from services.schemas import RunManifest

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"

# Settings that place or report a run without changing its results
_NON_RESULT_SETTINGS = {"DATABASE_URL", "OUTPUT_DIR", "LOG_LEVEL", "EVAL_WORKERS"}


def sha256_file(path: Union[str, Path]) -> str:
    digest = hashlib.sha256()
    with Path(path).open("rb") as f:
        for block in iter(lambda: f.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def settings_overrides(config: Optional[Settings] = None) -> Dict[str, Any]:
    """Result-affecting settings that differ from their declared defaults, keyed by env var name"""
    if config is None:
        config = settings
    prefix = Settings.model_config.get("env_prefix", "")
    changed = {}
    for name, field in Settings.model_fields.items():
        if name in _NON_RESULT_SETTINGS:
            continue
        value = getattr(config, name)
        if value != field.default:
            changed[f"{prefix}{name}"] = value
    return changed


def build_manifest(
    command: str,
    inputs: Mapping[str, Union[str, Path]],
    seed: Optional[int] = None,
    overrides: Optional[Dict[str, Any]] = None,
    outputs: Optional[Mapping[str, Union[str, Path]]] = None,
    config: Optional[Settings] = None,
) -> RunManifest:
    """
    Manifest of one command: input and output files by content hash, the seed
    and every parameter that differs from the defaults, whether it came from a
    flag or from a TRAJ_ setting.
    """
    effective = settings_overrides(config)
    effective.update((k, v) for k, v in (overrides or {}).items() if v is not None)
    return RunManifest(
        command=command,
        inputs={name: sha256_file(path) for name, path in inputs.items()},
        seed=seed,
        overrides=effective,
        version=VERSION,
        outputs={name: sha256_file(path) for name, path in (outputs or {}).items()},
    )


def write_manifest(out_dir: Union[str, Path], manifest: RunManifest) -> Path:
    return write_model(Path(out_dir) / MANIFEST_NAME, manifest)


def record_run(
    manifest: RunManifest,
    output_dir: Optional[Union[str, Path]] = None,
    status: str = "completed",
    duration_s: Optional[float] = None,
    error_message: Optional[str] = None,
    db: Optional[Session] = None,
    session_factory: Callable[[], Session] = SessionLocal,
) -> int:
    """Store a manifest in the run registry; returns the record id"""
    owned = db is None
    db = db or session_factory()
    try:
        record = RunRecord(
            command=manifest.command,
            seed=manifest.seed,
            manifest=manifest.model_dump(mode="json"),
            output_dir=str(output_dir) if output_dir is not None else None,
            status=status,
            duration_s=duration_s,
            error_message=error_message,
        )
        db.add(record)
        db.commit()
        db.refresh(record)
        logger.info("recorded %s run #%d (%s)", manifest.command, record.id, status)
        return record.id
    except Exception:
        db.rollback()
        raise
    finally:
        if owned:
            db.close()
