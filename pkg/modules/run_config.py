# modules/run_config.py
"""JSON run config: areas, file paths, seeds and per-module settings."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from config import config
from logging_config import configure_logger
from modules.data_model import N_PARAMS, PARAM_NAMES, ParamVector
from modules.dynamics import DynamicsConfig
from modules.errors import DataValidationError
from modules.evaluation import SimulationConfig
from modules.likelihood import LikelihoodConfig
from modules.pooling import PoolingConfig
from modules.priors import DEFAULT_LAMBDA, HierPriorConfig, IndependentPrior
from modules.sampler import ImisConfig

logger = configure_logger("run_config")


def _eight(value, field_name: str) -> Tuple[float, ...]:
    if value is None:
        return value
    if len(value) != N_PARAMS:
        raise ValueError(f"{field_name} needs {N_PARAMS} values in order {','.join(PARAM_NAMES)}")
    return tuple(float(v) for v in value)


class AreaSpec(BaseModel):
    """One area: its data files and, for simulation, an optional truth vector."""

    area_id: str = Field(min_length=1)
    country: Optional[str] = None
    anc: Optional[Path] = None
    npbs: Optional[Path] = None
    demography: Optional[Path] = None
    initial_population: float = Field(default=1_000_000.0, gt=0.0)
    truth: Optional[Tuple[float, ...]] = None

    @field_validator("truth", mode="before")
    @classmethod
    def _check_truth(cls, value):
        return _eight(value, "truth")


class HierarchySpec(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    lam: Tuple[float, ...] = Field(default=DEFAULT_LAMBDA, alias="lambda")
    prior_overrides: Dict[str, Tuple[float, float]] = Field(default_factory=dict)

    @field_validator("lam", mode="before")
    @classmethod
    def _check_lambda(cls, value):
        return _eight(value, "lambda")

    def independent_prior(self) -> IndependentPrior:
        return IndependentPrior().with_overrides(self.prior_overrides)

    def hier_prior(self) -> HierPriorConfig:
        return HierPriorConfig.from_lambda(self.lam, self.independent_prior())


class PoolingSpec(PoolingConfig):
    correlation_years: List[int] = Field(default_factory=list)
    correlation_outputs: List[str] = Field(default_factory=lambda: ["prevalence", "incidence"])

    @field_validator("correlation_outputs")
    @classmethod
    def _check_outputs(cls, value):
        bad = [v for v in value if v not in ("prevalence", "incidence")]
        if bad:
            raise ValueError(f"correlation outputs must be prevalence or incidence, got {bad}")
        return value


class SimulationSpec(SimulationConfig):
    truth: Tuple[float, ...] = Field(default_factory=lambda: tuple(IndependentPrior().mean.tolist()))
    site_count: int = Field(default=4, ge=0)
    years: List[int] = Field(default_factory=lambda: list(range(1995, 2004)))
    year_start: int = 1970
    year_end: int = 2015

    @field_validator("truth", mode="before")
    @classmethod
    def _check_truth(cls, value):
        return _eight(value, "truth")

    @model_validator(mode="after")
    def _check_span(self) -> "SimulationSpec":
        if self.year_end <= self.year_start:
            raise ValueError("simulation year_end must be after year_start")
        return self


class RunConfig(BaseModel):
    """Everything a CLI command needs; relative paths resolve against `base_dir`."""

    seed: int = 0
    out_dir: Path = Field(default_factory=lambda: Path(config.OUTPUT_DIR))
    threads: int = Field(default_factory=lambda: config.THREADS, ge=1)
    n_trajectory_draws: int = Field(default_factory=lambda: config.POOLING["n_draws"], ge=1)
    areas: List[AreaSpec] = Field(min_length=1)
    dynamics: DynamicsConfig = Field(default_factory=DynamicsConfig)
    likelihood: LikelihoodConfig = Field(default_factory=LikelihoodConfig)
    imis: ImisConfig = Field(default_factory=ImisConfig)
    pooling: PoolingSpec = Field(default_factory=PoolingSpec)
    hierarchy: HierarchySpec = Field(default_factory=HierarchySpec)
    ensembles: Dict[str, Path] = Field(default_factory=dict)
    simulation: Optional[SimulationSpec] = None
    base_dir: Path = Field(default=Path("."), exclude=True)

    @model_validator(mode="after")
    def _unique_areas(self) -> "RunConfig":
        ids = [a.area_id for a in self.areas]
        if len(set(ids)) != len(ids):
            raise ValueError(f"area ids must be unique, got {ids}")
        return self

    def resolve(self, path: Optional[Path]) -> Optional[Path]:
        if path is None:
            return None
        return path if path.is_absolute() else self.base_dir / path

    @property
    def output_dir(self) -> Path:
        return self.resolve(self.out_dir)

    def area_path(self, area: AreaSpec, kind: str) -> Path:
        """Configured data file of an area, or the default location under out_dir/data."""
        configured = getattr(area, kind)
        if configured is not None:
            return self.resolve(configured)
        return self.output_dir / "data" / f"{area.area_id}_{kind}.csv"

    def ensemble_path(self, area_id: str) -> Path:
        if area_id in self.ensembles:
            return self.resolve(self.ensembles[area_id])
        return self.output_dir / "ensembles" / f"{area_id}.csv"

    def truth_for(self, area: AreaSpec) -> ParamVector:
        sim = self.simulation or SimulationSpec()
        return ParamVector.from_array(area.truth if area.truth is not None else sim.truth)

    def countries(self) -> Dict[str, List[AreaSpec]]:
        """Areas grouped by country; areas without one share the group ''."""
        groups: Dict[str, List[AreaSpec]] = {}
        for area in self.areas:
            groups.setdefault(area.country or "", []).append(area)
        return groups


def load_run_config(path: Path) -> RunConfig:
    """Parse a JSON run config; raises FileNotFoundError or DataValidationError."""
    path = Path(path)
    if not path.is_file():
        logger.error("Run config not found: %s", path)
        raise FileNotFoundError(f"run config not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        logger.error("Run config %s is not valid JSON: %s", path, e)
        raise DataValidationError(f"{path}: invalid JSON at line {e.lineno}: {e.msg}") from e
    try:
        run = RunConfig.model_validate({**raw, "base_dir": path.parent})
    except ValidationError as e:
        first = e.errors()[0]
        where = ".".join(str(p) for p in first["loc"])
        logger.error("Run config %s failed validation: %s", path, e)
        raise DataValidationError(f"{path}: {where}: {first['msg']}") from e
    logger.info("Loaded run config %s with %d areas", path, len(run.areas))
    return run


def parse_lambda(text: str) -> Tuple[float, ...]:
    """Comma-separated lambda vector from the command line ('inf' allowed)."""
    try:
        values = tuple(float(v) for v in text.split(","))
    except ValueError as e:
        raise DataValidationError(f"--lambda must be {N_PARAMS} comma-separated numbers: {text!r}") from e
    if len(values) != N_PARAMS or not all(v > 0 for v in values) or np.isnan(values).any():
        raise DataValidationError(f"--lambda needs {N_PARAMS} positive values, got {text!r}")
    return values
