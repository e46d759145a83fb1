# api/planning.py - Optimization and trajectory sampling endpoints
import logging
import os
import time
import uuid
from typing import List

import aiofiles
from fastapi import APIRouter, Depends, HTTPException
from fastapi.concurrency import run_in_threadpool
from pydantic import BaseModel, Field
from sqlalchemy.orm import Session

from config.settings import VERSION, settings
from database.models import get_db
from services.errors import DegenerateIntervalError, InputFormatError, OptimizationFailedError
from services.file_formats import trajectory_header
from services.interpolation import solve_trajectory
from services.manifest import record_run, settings_overrides, sha256_bytes
from services.optimizer import TrajectoryOptimizer
from services.schemas import ParetoFront, RunManifest, SolutionLadder, TrajectoryProblem

logger = logging.getLogger(__name__)

router = APIRouter()


class OptimizeRequest(BaseModel):
    problem: TrajectoryProblem
    population: int = settings.POPULATION
    generations: int = settings.GENERATIONS
    ladder_size: int = Field(default=settings.LADDER_SIZE, ge=1)
    seed: int = settings.DEFAULT_SEED


class OptimizeResponse(BaseModel):
    run_id: int
    output_dir: str
    front: ParetoFront
    ladder: SolutionLadder


class PlanRequest(BaseModel):
    problem: TrajectoryProblem
    ladder: SolutionLadder
    index: int = Field(ge=1)  # 1 = min-jerk
    rate: float = Field(default=settings.SAMPLE_RATE_HZ, gt=0)


class PlanResponse(BaseModel):
    index: int
    t_f: float
    header: List[str]
    rows: List[List[float]]


async def _save_json(path: str, text: str) -> str:
    async with aiofiles.open(path, "w") as f:
        await f.write(text)
    return path


@router.post("/optimize", response_model=OptimizeResponse)
async def optimize(request: OptimizeRequest, db: Session = Depends(get_db)):
    """
    Run NSGA-II on a waypoint problem and downsample the front into the
    solution ladder. Both are saved under the output directory and the run
    is recorded.
    """
    if request.problem.limits is None:
        raise HTTPException(status_code=400, detail="problem.limits is required for optimization")

    start_time = time.time()
    optimizer = TrajectoryOptimizer(
        population=request.population,
        generations=request.generations,
        ladder_size=request.ladder_size,
        seed=request.seed,
    )
    try:
        front, ladder = await run_in_threadpool(optimizer.optimize, request.problem)
    except (OptimizationFailedError, DegenerateIntervalError) as e:
        raise HTTPException(status_code=422, detail=str(e))
    except (InputFormatError, ValueError) as e:
        raise HTTPException(status_code=400, detail=str(e))

    output_dir = os.path.join(settings.OUTPUT_DIR, f"optimize_{uuid.uuid4().hex[:12]}")
    os.makedirs(output_dir, exist_ok=True)
    problem_json = request.problem.model_dump_json()
    front_json = front.model_dump_json(indent=2)
    ladder_json = ladder.model_dump_json(indent=2)
    await _save_json(os.path.join(output_dir, "front.json"), front_json)
    await _save_json(os.path.join(output_dir, "ladder.json"), ladder_json)

    manifest = RunManifest(
        command="optimize",
        inputs={"problem": sha256_bytes(problem_json.encode("utf-8"))},
        seed=request.seed,
        overrides={**settings_overrides(), **request.model_dump(exclude={"problem"})},
        version=VERSION,
        outputs={
            "front": sha256_bytes(front_json.encode("utf-8")),
            "ladder": sha256_bytes(ladder_json.encode("utf-8")),
        },
    )
    await _save_json(os.path.join(output_dir, "manifest.json"), manifest.model_dump_json(indent=2))
    run_id = record_run(manifest, output_dir=output_dir, duration_s=time.time() - start_time, db=db)
    logger.info("optimize run #%d: %d ladder entries in %s", run_id, ladder.size, output_dir)

    return OptimizeResponse(run_id=run_id, output_dir=output_dir, front=front, ladder=ladder)


@router.post("/plan", response_model=PlanResponse)
async def plan(request: PlanRequest):
    """Sample the trajectory of one ladder entry (t, q, qd, qdd, qddd per joint)"""
    problem = request.problem
    ladder = request.ladder
    if ladder.waypoints_hash and ladder.waypoints_hash != problem.waypoints_fingerprint():
        raise HTTPException(status_code=400, detail="ladder was optimized for different waypoints")
    try:
        entry = ladder.entry(request.index)
    except IndexError as e:
        raise HTTPException(status_code=400, detail=str(e))
    if len(entry.h) != problem.n_waypoints + 1:
        raise HTTPException(status_code=400, detail="interval count does not match the waypoints")

    try:
        samples = solve_trajectory(entry.h, problem).sample(request.rate)
    except DegenerateIntervalError as e:
        raise HTTPException(status_code=422, detail=str(e))

    return PlanResponse(
        index=request.index,
        t_f=entry.t_f,
        header=trajectory_header(problem.joint_names),
        rows=samples.as_table().tolist(),
    )
