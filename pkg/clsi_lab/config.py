"""Runtime settings and the JSON documents clsi-lab reads and writes."""
import json
from functools import lru_cache
from pathlib import Path
from typing import Any, List, Literal, Optional, Union

import numpy as np
from dotenv import load_dotenv
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from clsi_lab.errors import ConfigurationError
from clsi_lab.linalg import density, matrix_from_json

REPORT_SCHEMA = "clsi-lab/report/v1"


###############################################################################
# SETTINGS
###############################################################################

class Settings(BaseSettings):
    model_config = SettingsConfigDict(env_prefix="CLSI_LAB_", extra="ignore")

    log_file: str = "clsi_lab.log"
    log_level: str = "INFO"
    max_workers: int = Field(4, ge=1)
    ancilla_cap: int = Field(4, ge=1)
    seed: int = 0
    progress: bool = False


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    load_dotenv(override=True)
    try:
        return Settings()
    except ValidationError as e:
        raise ConfigurationError(f"invalid CLSI_LAB_ settings: {e}") from e


###############################################################################
# INPUT DOCUMENTS
###############################################################################

class GeneratorConfig(BaseModel):
    """{"dim": n, "jumps": [matrix, ...]} with matrices as rows of [re, im] pairs or reals."""

    dim: int = Field(ge=1)
    jumps: List[Any]

    @field_validator("jumps")
    @classmethod
    def _parse_jumps(cls, value):
        for k, item in enumerate(value):
            matrix_from_json(item, f"jumps[{k}]")
        return value

    @model_validator(mode="after")
    def _check_dims(self):
        for k, a in enumerate(self.operators()):
            if a.shape != (self.dim, self.dim):
                raise ValueError(f"jumps[{k}] has shape {a.shape}, expected ({self.dim}, {self.dim})")
        return self

    def operators(self) -> List[np.ndarray]:
        return [matrix_from_json(item, f"jumps[{k}]") for k, item in enumerate(self.jumps)]


class StateConfig(BaseModel):
    state: Any

    @field_validator("state")
    @classmethod
    def _parse_state(cls, value):
        matrix_from_json(value, "state")
        return value

    def matrix(self) -> np.ndarray:
        return density(matrix_from_json(self.state, "state"))


class PipelineConfig(BaseModel):
    segments: int = Field(8, ge=2)
    n_targets: int = Field(16, ge=0)
    path_budget: int = Field(100, ge=1)
    pool_size: int = Field(500, ge=1)
    mlsi_samples: int = Field(60, ge=1)
    mlsi_budget: int = Field(20, ge=0)
    ancillas: List[int] = Field(default_factory=lambda: [1, 2])
    verify_states: int = Field(100, ge=1)
    t_points: int = Field(41, ge=2)
    interval_grid: int = Field(256, ge=16)


class SystemConfig(BaseModel):
    """{"group": "su2", "spin": 1, "directions": ["X", "Y"]} or
    {"group": "torus", "d": 2, "weights": [[1, 0], [0, 1]], "directions": [[1, 0]]}."""

    group: Literal["su2", "torus"]
    directions: List[Union[str, List[float]]]
    spin: Optional[float] = None
    extra_spins: List[float] = Field(default_factory=list)
    d: Optional[int] = Field(None, ge=1)
    weights: Optional[List[List[int]]] = None
    interval_constant: Optional[float] = Field(None, gt=0)
    pipeline: PipelineConfig = Field(default_factory=PipelineConfig)

    @model_validator(mode="after")
    def _cross_fields(self):
        if not self.directions:
            raise ValueError("directions: at least one direction is required")
        if self.group == "su2":
            if self.spin is None:
                raise ValueError("spin: required for group su2")
            if self.d is not None or self.weights is not None:
                raise ValueError("d/weights: only allowed for group torus")
        else:
            if self.d is None or self.weights is None:
                raise ValueError("d/weights: required for group torus")
            if self.spin is not None or self.extra_spins:
                raise ValueError("spin: only allowed for group su2")
            if any(len(row) != self.d for row in self.weights):
                raise ValueError(f"weights: every row must have {self.d} entries")
            if any(isinstance(x, str) or len(x) != self.d for x in self.directions):
                raise ValueError(f"directions: torus directions are coefficient vectors of length {self.d}")
        return self


def _load(path: Union[str, Path], model):
    try:
        with open(path, "r") as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigurationError(f"cannot read {path}: {e}") from e
    try:
        return model.model_validate(data)
    except ValidationError as e:
        raise ConfigurationError(f"{path}: {e}") from e


def load_system_config(path: Union[str, Path]) -> SystemConfig:
    return _load(path, SystemConfig)


def load_generator_config(path: Union[str, Path]) -> GeneratorConfig:
    return _load(path, GeneratorConfig)


def load_state(path: Union[str, Path]) -> np.ndarray:
    return _load(path, StateConfig).matrix()


###############################################################################
# OUTPUT
###############################################################################

def write_json(path: Union[str, Path], payload: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, default=str)
