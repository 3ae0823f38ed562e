from functools import lru_cache

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    app_name: str = "wave-enclosure"
    log_level: str = "INFO"

    # 0 keeps the numba default (all cores)
    threads: int = 0
    output_dir: str = "runs"

    numeric_floor: float = 1e-300
    fit_residual_threshold: float = 0.05
    fit_min_points: int = 4

    cfl_safety: float = 0.9
    cg_tolerance: float = 1e-8
    cg_max_iterations: int = 20000

    tau_min: float = 2.0
    tau_max: float = 16.0
    tau_count: int = 16

    float_format: str = ".17g"

    model_config = SettingsConfigDict(
        env_prefix="WAVE_ENCLOSURE_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    return Settings()
