from pathlib import Path

from pydantic import field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


RUNTIME_ONLY = {"threads", "log_level"}


class Settings(BaseSettings):
    threads: int = 1
    log_level: str = "WARNING"

    boundary_tol: float = 1e-9
    eps_eq: float = 1e-9
    dedup_tol: float = 1e-6
    dedup_gap_guard: float = 1e-3
    verify_gap_tol: float = 1e-9
    genus_verify_gap_tol: float = 1e-8

    oracle_inflate: float = 1.5
    modular_margin: float = 1.5
    frontier_safety: float = 1.01

    max_regular_genus: int = 16
    max_cover_genus: int = 5
    ball_normsq_cap: float = 1e7
    max_ball_elements: int = 5_000_000
    reduce_max_iter: int = 100_000
    int64_limit: int = 2**63 - 1

    modular_y_max: float = 20.0
    boundary_fraction: float = 0.1
    boundary_band: float = 1e-3

    equilateral_circle_candidates: int = 96
    equilateral_general_candidates: int = 400

    model_config = SettingsConfigDict(
        env_prefix="GEOCOVER_",
        env_file=str(Path(__file__).with_name(".env")),
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    @field_validator("log_level", mode="before")
    def upper_level(cls, v):
        return v.strip().upper() if isinstance(v, str) else v

    @field_validator(
        "boundary_tol", "eps_eq", "dedup_tol", "dedup_gap_guard",
        "verify_gap_tol", "genus_verify_gap_tol", "boundary_band",
    )
    def positive_tolerance(cls, v):
        if v <= 0:
            raise ValueError("tolerances must be positive")
        return v

    @field_validator("threads")
    def at_least_one_worker(cls, v):
        if v < 1:
            raise ValueError("threads must be >= 1")
        return v

    @field_validator("oracle_inflate", "modular_margin", "frontier_safety")
    def at_least_one(cls, v):
        if v < 1:
            raise ValueError("inflation factors must be >= 1")
        return v

    def overrides(self) -> dict:
        """Result-affecting fields whose value differs from the built-in default (provenance).

        Worker count and log level are not recorded.
        """
        defaults = Settings.model_construct()
        return {
            name: value
            for name, value in self.model_dump(exclude=RUNTIME_ONLY).items()
            if getattr(defaults, name) != value
        }


def get_settings(**overrides) -> Settings:
    return Settings(**overrides)
