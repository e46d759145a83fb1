# database/models.py - SQLAlchemy run registry and DB init
from datetime import datetime

from sqlalchemy import JSON, Column, DateTime, Float, Integer, String, Text, create_engine
from sqlalchemy.orm import declarative_base, sessionmaker

from config.settings import settings

Base = declarative_base()


class RunRecord(Base):
    __tablename__ = "run_record"
    id = Column(Integer, primary_key=True, index=True)
    command = Column(String, index=True)
    seed = Column(Integer, nullable=True)
    manifest = Column(JSON)
    output_dir = Column(String, nullable=True)
    status = Column(String, default="completed")
    duration_s = Column(Float, nullable=True)
    created_at = Column(DateTime, default=datetime.utcnow)
    error_message = Column(Text, nullable=True)


def _connect_args(url: str) -> dict:
    return {"check_same_thread": False} if url.startswith("sqlite") else {}


engine = create_engine(settings.DATABASE_URL, connect_args=_connect_args(settings.DATABASE_URL))
SessionLocal = sessionmaker(autocommit=False, autoflush=False, bind=engine)


def get_db():
    db = SessionLocal()
    try:
        yield db
    finally:
        db.close()


def init_db():
    Base.metadata.create_all(bind=engine)
