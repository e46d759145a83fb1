# config/settings.py - Project settings
from pydantic_settings import BaseSettings, SettingsConfigDict

VERSION = "1.0.0"


class Settings(BaseSettings):
    model_config = SettingsConfigDict(env_prefix="TRAJ_", env_file=".env", extra="ignore")

    # Spline / interpolation
    SPLINE_DEGREE: int = 5
    MAX_CONDITION_NUMBER: float = 1e12
    SAMPLE_RATE_HZ: float = 500.0

    # Optimizer
    POPULATION: int = 90
    GENERATIONS: int = 200
    LADDER_SIZE: int = 15
    SBX_ETA: float = 15.0
    SBX_PROB: float = 0.9
    PM_ETA: float = 20.0
    UPPER_BOUND_FACTOR: float = 20.0  # beta
    UPPER_BOUND_REF_S: float = 0.1  # t_ref
    INTERVAL_FLOOR_S: float = 1e-3
    ASF_EPSILON: float = 1e-6
    ASF_RHO: float = 1e-4
    EVAL_WORKERS: int = 1
    DEFAULT_SEED: int = 0

    # HRV decision making
    WINDOW_S: float = 30.0
    DELTA_RS: float = 0.02
    DELTA_SR: float = 0.01
    RR_REST_S: float = 0.80
    SIGMA_REST_S: float = 0.14
    SIGMA_STRESS_S: float = 0.06
    RR_STRESS_OFFSET_S: float = 0.10

    # Storage
    DATABASE_URL: str = "sqlite:///./runs.db"
    OUTPUT_DIR: str = "outputs"

    LOG_LEVEL: str = "INFO"


settings = Settings()
