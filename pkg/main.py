# main.py - FastAPI Application Entry Point
import logging
from datetime import datetime

from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware
from sqlalchemy import text

from api.adaptation import live_sessions
from api.adaptation import router as adaptation_router
from api.planning import router as planning_router
from api.runs import router as runs_router
from config.settings import VERSION, settings
from database.models import SessionLocal, init_db

# Configure logging
logging.basicConfig(level=settings.LOG_LEVEL.upper())
logger = logging.getLogger(__name__)

# Initialize FastAPI app
app = FastAPI(
    title="Adaptive Trajectory Planner",
    description="Time/jerk optimal robot trajectories with HRV-driven online selection",
    version=VERSION,
    docs_url="/docs",
    redoc_url="/redoc",
)

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

# Include routers
app.include_router(planning_router, prefix="/api/v1/planning", tags=["Planning"])
app.include_router(adaptation_router, prefix="/api/v1/adaptation", tags=["Adaptation"])
app.include_router(runs_router, prefix="/api/v1/runs", tags=["Runs"])


@app.on_event("startup")
async def startup_event():
    """Initialize the run registry on startup"""
    logger.info("Starting up Adaptive Trajectory Planner...")
    init_db()
    logger.info("Database initialized successfully")


@app.on_event("shutdown")
async def shutdown_event():
    logger.info("Shutting down Adaptive Trajectory Planner (%d live sessions dropped)", len(live_sessions))
    live_sessions.clear()


@app.get("/")
async def root():
    return {
        "message": "Adaptive Trajectory Planner",
        "version": VERSION,
        "status": "running",
        "timestamp": datetime.utcnow().isoformat(),
    }


@app.get("/health")
async def health_check():
    """Health check endpoint"""
    database = "connected"
    db = SessionLocal()
    try:
        db.execute(text("SELECT 1"))
    except Exception as e:
        logger.warning("database health check failed: %s", e)
        database = "unavailable"
    finally:
        db.close()
    return {
        "status": "healthy" if database == "connected" else "degraded",
        "timestamp": datetime.utcnow().isoformat(),
        "services": {"database": database, "live_sessions": len(live_sessions)},
    }


if __name__ == "__main__":
    import uvicorn

    uvicorn.run(app, host="0.0.0.0", port=8000)
