from pathlib import Path
from typing import Optional, Tuple

from pydantic_settings import BaseSettings

_DATA_DIR = Path(__file__).resolve().parent.parent / "data"


class Settings(BaseSettings):
    # Service Configuration
    HOST: str = "localhost"
    PORT: int = 8000
    DEBUG: bool = True
    LOG_LEVEL: str = "INFO"

    # Numerics Configuration
    PRECISION: str = "single"
    SVD_METHOD: str = "auto"
    JACOBI_MAX_DIM: int = 256
    SVD_MAX_SWEEPS: int = 60
    SVD_TOLERANCE: float = 1e-12
    POWER_ITERATIONS: int = 100
    AOL_CLAMP_FLOOR: Optional[float] = None
    TRACK_ITERATION_ERRORS: bool = True

    # Schedule Configuration
    SCHEDULES_DIR: str = str(_DATA_DIR / "schedules")
    DEFAULT_SCHEDULE_MUON: str = "muon"
    DEFAULT_SCHEDULE_MUON_PLUS: str = "muon_plus"
    DEFAULT_SCHEDULE_TURBO: str = "muon_plus"
    POLISH_TRIPLE: Tuple[float, float, float] = (1.875, -1.25, 0.375)

    # Benchmark Configuration
    MAX_MATRIX_SIZE: int = 2048
    DEFAULT_BATCH: int = 32
    BENCH_WORKERS: int = 1

    # Trainer Configuration
    TRAIN_DIVERGENCE_FACTOR: float = 10.0
    TRAIN_DIVERGENCE_PATIENCE: int = 50
    UPDATE_RMS: float = 0.2

    class Config:
        env_file = ".env"
        extra = "ignore"


settings = Settings()
