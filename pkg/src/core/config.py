import logging
import sys
from pathlib import Path
from typing import List, Optional

from pydantic_settings import BaseSettings, SettingsConfigDict

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


class Settings(BaseSettings):
    # Solver
    svm_c: float = 1.0
    svm_tol: float = 1e-3
    svm_max_iter: int = 10_000_000

    # Stepwise selection
    cv_folds: int = 5
    select_kernel: str = "rbf"
    predict_kernel: str = "rbf"

    # Baselines
    correlation_thresholds: List[float] = [0.7, 0.75, 0.8, 0.85, 0.9, 0.95]
    forest_trees: int = 500

    # Benchmark
    repetitions: int = 100
    seed: int = 0
    threads: int = 1
    standardize: bool = True

    # Output
    output_dir: str = "results"

    # Logging
    log_level: str = "INFO"
    log_file: Optional[str] = None

    model_config = SettingsConfigDict(
        env_file="config/.env",
        env_prefix="STEPSVM_",
        extra="ignore",
    )


def load_settings(config_path: Optional[str] = None) -> Settings:
    """Load settings, reading a key=value file instead of config/.env when given"""
    if config_path is None:
        return Settings()
    path = Path(config_path)
    if not path.is_file():
        raise FileNotFoundError(f"Config file not found: {path}")
    return Settings(_env_file=str(path))


def configure_logging(level: str = "INFO", log_file: Optional[str] = None) -> None:
    """Route package logs to stderr (and optionally a file); stdout stays clean"""
    handlers: List[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if log_file:
        Path(log_file).parent.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(log_file))
    logging.basicConfig(level=level.upper(), format=LOG_FORMAT, handlers=handlers, force=True)
