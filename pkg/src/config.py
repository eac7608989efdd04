"""Application configuration using pydantic-settings."""

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Config(BaseSettings):
    """Process-wide defaults loaded from environment variables.

    Scenario files override the numeric defaults per run.
    """

    model_config = SettingsConfigDict(
        env_file=".env", env_file_encoding="utf-8", extra="ignore"
    )

    # Output
    output_dir: str = Field(
        default="output", description="Artifact directory (env OUTPUT_DIR)"
    )

    # Planner defaults
    relax_iteration_cap: int = Field(
        default=10_000, description="Relaxation sweeps per adjustment"
    )
    candidate_worklist_cap: int = Field(
        default=64, description="Max candidates generated per planning step"
    )
    plan_point_cap: int = Field(
        default=4000, description="Max points appended while prolonging a path"
    )
    prm_samples: int = Field(default=500, description="PRM sample count N_s")
    prm_neighbors: int = Field(default=10, description="PRM neighbour count N_c")

    # Simulation defaults
    exploration_step_cap: int = Field(
        default=1_000_000, description="Control steps before an exploration times out"
    )
    navigation_step_cap: int = Field(
        default=5000, description="Sampling intervals before a navigation run times out"
    )
    tracking_substeps: int = Field(
        default=50, description="Actuation substeps per sampling interval"
    )

    # Sweep
    sweep_workers: int = Field(default=4, description="Parallel sweep workers")

    # Logging
    log_level: str = Field(default="INFO", description="Logging level")
    log_format: str = Field(default="text", description="Log format: json or text")
    log_file_path: str = Field(default="", description="Optional log file path")

    # Development/Debug
    debug_mode: bool = Field(default=False, description="Enable debug logging")


# Global config instance
config = Config()
