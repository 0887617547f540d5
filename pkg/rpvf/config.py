"""Learner and experiment configuration using Pydantic settings."""

from __future__ import annotations

import os
from enum import StrEnum
from pathlib import Path
from typing import Any

from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from rpvf.gridworld import THREE_ROOM_HEIGHT, RewardIndexing
from rpvf.spectral import ValueScale

ENV_PREFIX = "RPVF_"

# (episodes, horizon) sampling budgets
SMALL_GRID_BUDGET = (500, 50)
LARGE_GRID_BUDGET = (5000, 100)


class LearnerConfig(BaseModel):
    """Parameters of LSTDQ and representational policy iteration.

    Attributes:
        alpha: Discount factor
        k: Number of basis functions per action block
        t: Maximum number of policy iterations
        big_t: Samples used per LSTDQ pass (None = the whole sample set)
        ridge: Ridge added to A when the unregularised system is singular
        seed: Seed recorded with the run
        condition_limit: Condition number above which the ridge is applied
    """

    model_config = ConfigDict(frozen=True)

    alpha: float = Field(default=0.9, gt=0.0, lt=1.0)
    k: int = Field(default=4, ge=1)
    t: int = Field(default=20, ge=1)
    big_t: int | None = Field(default=None, ge=1)
    ridge: float = Field(default=1e-6, ge=0.0)
    seed: int = 0
    condition_limit: float = Field(default=1e12, gt=0.0)


class ExperimentId(StrEnum):
    KERNEL_EIG = "kernel-eig"
    THREEROOM_BASIS = "threeroom-basis"
    GOALGRID_COMPARE = "goalgrid-compare"
    MINEGRID_BENCH = "minegrid-bench"


DEFAULT_BETA = {
    ExperimentId.KERNEL_EIG: 0.1,
    ExperimentId.THREEROOM_BASIS: 0.1,
    ExperimentId.GOALGRID_COMPARE: 1.0,
    ExperimentId.MINEGRID_BENCH: 0.1,
}


class ExperimentConfig(BaseSettings):
    """Configuration for one experiment run.

    Values resolve in this order: CLI flags, then environment variables
    (RPVF_ALPHA, RPVF_BETA, ...), then a flat key=value config file, then defaults.
    Unset beta/episodes/horizon fall back to per-experiment defaults.
    """

    model_config = SettingsConfigDict(env_prefix=ENV_PREFIX, case_sensitive=False)

    experiment: ExperimentId = ExperimentId.GOALGRID_COMPARE
    alpha: float = 0.9
    beta: float | None = None
    sigma: float = 0.1
    k: int = Field(default=4, ge=1)
    seed: int = 0

    # Mine-grid benchmark
    instances: int = Field(default=10, ge=1)
    policies: int = Field(default=10, ge=1)
    grid_size: int = Field(default=5, ge=2)
    mines: int = Field(default=5, ge=0)

    # Sampling budget
    episodes: int | None = Field(default=None, ge=1)
    horizon: int | None = Field(default=None, ge=1)

    # Learner
    iterations: int = Field(default=20, ge=1)
    ridge: float = Field(default=1e-6, ge=0.0)
    reward_indexing: RewardIndexing = RewardIndexing.SUCCESSOR

    # Domains and bases
    wall_penalty: float = -200.0
    door_row: int = Field(default=11, ge=1, le=THREE_ROOM_HEIGHT)
    squared_kernel: bool = False
    kernel_scale: ValueScale = ValueScale.SUM
    symmetrized_diffusion: bool = True

    workers: int = Field(default=1, ge=1)
    out: Path = Path("results")

    @field_validator("alpha")
    @classmethod
    def validate_alpha(cls, v: float) -> float:
        """Validate the discount lies strictly inside (0, 1)."""
        if not 0.0 < v < 1.0:
            msg = f"Discount must lie strictly inside (0, 1), got {v}"
            raise ValueError(msg)
        return v

    @field_validator("sigma")
    @classmethod
    def validate_sigma(cls, v: float) -> float:
        if v <= 0:
            msg = f"Sigma must be positive, got {v}"
            raise ValueError(msg)
        return v

    @field_validator("beta")
    @classmethod
    def validate_beta(cls, v: float | None) -> float | None:
        if v is not None and v < 0:
            msg = f"Beta must be non-negative, got {v}"
            raise ValueError(msg)
        return v

    @field_validator("wall_penalty")
    @classmethod
    def validate_wall_penalty(cls, v: float) -> float:
        if v >= 0:
            msg = f"Wall penalty must be negative, got {v}"
            raise ValueError(msg)
        return v

    @property
    def resolved_beta(self) -> float:
        return DEFAULT_BETA[self.experiment] if self.beta is None else self.beta

    def sampling_budget(self, large: bool = False) -> tuple[int, int]:
        """(episodes, horizon), defaulting by grid size."""
        default_episodes, default_horizon = LARGE_GRID_BUDGET if large else SMALL_GRID_BUDGET
        return self.episodes or default_episodes, self.horizon or default_horizon

    @property
    def output_dir(self) -> Path:
        return self.out / self.experiment.value

    def learner_config(self, seed: int | None = None) -> LearnerConfig:
        return LearnerConfig(
            alpha=self.alpha,
            k=self.k,
            t=self.iterations,
            ridge=self.ridge,
            seed=self.seed if seed is None else seed,
        )

    @classmethod
    def load(cls, config_file: Path | str | None = None, **overrides: Any) -> ExperimentConfig:
        """Resolve a config from an optional key=value file plus explicit overrides."""
        file_values: dict[str, Any] = {}
        if config_file is not None:
            path = Path(config_file)
            if not path.exists():
                msg = f"Config file not found: {path}"
                raise FileNotFoundError(msg)
            file_values = {
                key.lower(): value
                for key, value in dotenv_values(path).items()
                if value is not None
            }
        environment = {key.upper() for key in os.environ}
        file_values = {
            key: value
            for key, value in file_values.items()
            if f"{ENV_PREFIX}{key}".upper() not in environment
        }
        explicit = {key: value for key, value in overrides.items() if value is not None}
        return cls(**{**file_values, **explicit})
