# api/runs.py - Run registry endpoints
from typing import Optional

from fastapi import APIRouter, Depends, HTTPException
from sqlalchemy.orm import Session

from database.models import RunRecord, get_db

router = APIRouter()


def _summary(run: RunRecord) -> dict:
    return {
        "run_id": run.id,
        "command": run.command,
        "seed": run.seed,
        "status": run.status,
        "output_dir": run.output_dir,
        "duration_s": run.duration_s,
        "created_at": run.created_at,
    }


@router.get("")
async def list_runs(
    skip: int = 0,
    limit: int = 100,
    command: Optional[str] = None,
    db: Session = Depends(get_db),
):
    """List recorded runs with optional command filter"""
    query = db.query(RunRecord)
    if command:
        query = query.filter(RunRecord.command == command)
    runs = query.order_by(RunRecord.id).offset(skip).limit(limit).all()
    return {"runs": [_summary(r) for r in runs], "total": len(runs)}


@router.get("/{run_id}")
async def get_run(run_id: int, db: Session = Depends(get_db)):
    run = db.query(RunRecord).filter(RunRecord.id == run_id).first()
    if not run:
        raise HTTPException(status_code=404, detail="Run not found")
    return dict(_summary(run), manifest=run.manifest, error_message=run.error_message)
