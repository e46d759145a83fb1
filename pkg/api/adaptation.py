# api/adaptation.py - Live HRV decision sessions and offline RR replay
import logging
import uuid
from typing import Dict, List, Optional

from fastapi import APIRouter, File, HTTPException, UploadFile
from pydantic import BaseModel, Field

from config.settings import settings
from services.adaptation import DecisionMaker, index_timeline, warn_on_ladder_size
from services.errors import InputFormatError
from services.file_formats import parse_rr_csv
from services.schemas import HrvParams, TimelineRow

logger = logging.getLogger(__name__)

router = APIRouter()

# Live sessions by id; each DecisionMaker guards its own state
live_sessions: Dict[str, DecisionMaker] = {}


class CreateSessionRequest(BaseModel):
    ladder_sizes: List[int] = Field(default_factory=lambda: [settings.LADDER_SIZE], min_length=1)
    hrv: HrvParams = Field(default_factory=HrvParams)
    pin_index: Optional[int] = None
    initial_rr: Optional[float] = Field(default=None, gt=0)


class SessionStatus(BaseModel):
    session_id: str
    indices: List[int]
    prev_mean_rr: Optional[float]
    windows_closed: int


class RrPush(BaseModel):
    samples: List[List[float]]  # (timestamp_s, rr_s) rows


class RrPushResponse(BaseModel):
    session_id: str
    indices: List[int]
    decisions: List[TimelineRow]


class ReplayResponse(BaseModel):
    filename: str
    windows: int
    final_index: int
    timeline: List[TimelineRow]


def _status(session_id: str, maker: DecisionMaker) -> SessionStatus:
    state = maker.state
    return SessionStatus(
        session_id=session_id,
        indices=list(state.indices),
        prev_mean_rr=state.prev_mean_rr,
        windows_closed=len(maker.timeline),
    )


def _get_session(session_id: str) -> DecisionMaker:
    maker = live_sessions.get(session_id)
    if maker is None:
        raise HTTPException(status_code=404, detail="Session not found")
    return maker


@router.post("/sessions", response_model=SessionStatus)
async def create_session(request: CreateSessionRequest):
    """Open a live decision session; a robot client reads indices at its cycle boundaries"""
    try:
        maker = DecisionMaker(request.hrv, request.ladder_sizes, pin_index=request.pin_index, initial_rr=request.initial_rr)
    except ValueError as e:
        raise HTTPException(status_code=400, detail=str(e))
    warn_on_ladder_size(request.hrv, request.ladder_sizes)
    session_id = str(uuid.uuid4())
    live_sessions[session_id] = maker
    logger.info("live session %s: ladders %s, start indices %s", session_id, request.ladder_sizes, maker.current_indices())
    return _status(session_id, maker)


@router.post("/sessions/{session_id}/rr", response_model=RrPushResponse)
async def push_rr(session_id: str, payload: RrPush):
    """Append RR samples; every window the newest timestamp has passed is closed and decided"""
    maker = _get_session(session_id)
    if any(len(row) != 2 for row in payload.samples):
        raise HTTPException(status_code=400, detail="samples must be (timestamp_s, rr_s) pairs")
    try:
        rows = maker.push(payload.samples)
    except ValueError as e:
        raise HTTPException(status_code=400, detail=str(e))
    return RrPushResponse(session_id=session_id, indices=list(maker.current_indices()), decisions=rows)


@router.get("/sessions/{session_id}", response_model=SessionStatus)
async def get_session(session_id: str):
    return _status(session_id, _get_session(session_id))


@router.delete("/sessions/{session_id}")
async def close_session(session_id: str):
    _get_session(session_id)
    del live_sessions[session_id]
    return {"message": "Session closed"}


@router.post("/replay", response_model=ReplayResponse)
async def replay(
    file: UploadFile = File(...),
    ladder_size: int = settings.LADDER_SIZE,
    window: float = settings.WINDOW_S,
    delta_rs: float = settings.DELTA_RS,
    delta_sr: float = settings.DELTA_SR,
    rr_rest: float = settings.RR_REST_S,
    pin_index: Optional[int] = None,
):
    """
    Replay an uploaded RR recording (CSV of timestamp_s, rr_s) through the
    decision maker and return the index timeline.
    """
    content = await file.read()
    try:
        stream = parse_rr_csv(content.decode("utf-8"), file.filename or "upload")
        params = HrvParams(window=window, delta_rs=delta_rs, delta_sr=delta_sr, rr_rest=rr_rest)
        warn_on_ladder_size(params, ladder_size)
        rows = index_timeline(stream, params, ladder_size, pin_index=pin_index)
    except (InputFormatError, ValueError, UnicodeDecodeError) as e:
        raise HTTPException(status_code=400, detail=str(e))
    return ReplayResponse(filename=file.filename or "", windows=len(rows), final_index=rows[-1].index, timeline=rows)
