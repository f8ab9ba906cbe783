# modules/pooling.py
"""
Hierarchical joint posterior across the K areas of one country, built from
independently fitted ensembles without refitting:

1. combine: draw candidate tuples, one sample index per area, each area's index
   drawn in proportion to its independent-model weight;
2. reweight: weight each tuple by the prior ratio pi_hier / prod pi_indep
   (the per-area importance weights cancel against the tuple proposal);
3. resample tuples and project each area's parameters.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from config import config
from logging_config import configure_logger
from modules.data_model import AreaDataset
from modules.dynamics import DynamicsConfig, TrajectoryBatch, project_batch
from modules.errors import PoolingError
from modules.priors import HierPriorConfig, IndependentPrior, hier_logprior_batch
from modules.sampler import WeightedEnsemble, resample_indices
from modules.utils import (
    QUANTILE_COLUMNS,
    effective_sample_size,
    normalize_log_weights,
    quantile_frame,
    weighted_correlation,
)

logger = configure_logger("pooling")

CORRELATION_COLUMNS = ["output", "year", "area_i", "area_j", "correlation"]


class PoolingConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    n_candidates: int = Field(default_factory=lambda: config.POOLING["n_candidates"], ge=1)
    n_draws: int = Field(default_factory=lambda: config.POOLING["n_draws"], ge=1)
    min_ess: float = Field(default_factory=lambda: config.POOLING["min_ess"], gt=0.0)
    rng_seed: int = 0
    chunk_size: int = Field(default=100_000, ge=1)


@dataclass(frozen=True)
class JointEnsemble:
    """Weighted tuples of per-area sample indices.

    indices[r, k] points into ensembles[k].thetas.
    """

    area_ids: Tuple[str, ...]
    indices: np.ndarray
    log_weights: np.ndarray
    ensembles: Tuple[WeightedEnsemble, ...]

    @property
    def n_areas(self) -> int:
        return len(self.area_ids)

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    @property
    def ess(self) -> float:
        return effective_sample_size(self.log_weights)

    def area_thetas(self, k: int, rows: Optional[np.ndarray] = None) -> np.ndarray:
        idx = self.indices[:, k] if rows is None else self.indices[rows, k]
        return self.ensembles[k].thetas[idx]

    def tuple_thetas(self, rows: Optional[np.ndarray] = None) -> np.ndarray:
        """(m, K, 8) parameter block for the selected tuples."""
        return np.stack([self.area_thetas(k, rows) for k in range(self.n_areas)], axis=1)

    def resample_rows(self, n: int, seed: int = 0) -> np.ndarray:
        return resample_indices(self.weights, n, np.random.default_rng(seed))


def _area_ids(ensembles: Sequence[WeightedEnsemble]) -> Tuple[str, ...]:
    return tuple(e.area_id or f"area{k + 1}" for k, e in enumerate(ensembles))


def combine(ensembles: Sequence[WeightedEnsemble], m: int, seed: int = 0) -> np.ndarray:
    """m candidate tuples as an (m, K) index array, each column drawn by its area's weights."""
    if not ensembles:
        logger.error("combine called without ensembles")
        raise PoolingError("pooling needs at least one area ensemble")
    if m < 1:
        raise ValueError(f"candidate count must be positive, got {m}")
    rng = np.random.default_rng(seed)
    columns = []
    for ens in ensembles:
        if len(ens) == 0:
            raise PoolingError(f"ensemble for {ens.area_id} is empty")
        columns.append(rng.choice(len(ens), size=m, replace=True, p=ens.weights / ens.weights.sum()))
    return np.column_stack(columns)


def reweight(
    tuples: np.ndarray,
    ensembles: Sequence[WeightedEnsemble],
    prior: Optional[IndependentPrior] = None,
    hier: Optional[HierPriorConfig] = None,
    cfg: Optional[PoolingConfig] = None,
) -> JointEnsemble:
    """Joint weights from the hierarchical/independent prior ratio.

    hier=None keeps the ratio at 1, i.e. the independent model expressed on tuples.
    """
    prior = prior or IndependentPrior()
    cfg = cfg or PoolingConfig()
    tuples = np.asarray(tuples, dtype=int)
    if tuples.ndim != 2 or tuples.shape[1] != len(ensembles):
        raise ValueError(f"tuples shape {tuples.shape} does not match {len(ensembles)} ensembles")
    joint = JointEnsemble(
        area_ids=_area_ids(ensembles),
        indices=tuples,
        log_weights=np.full(tuples.shape[0], -np.log(tuples.shape[0])),
        ensembles=tuple(ensembles),
    )
    if hier is None:
        return joint

    log_w = np.empty(tuples.shape[0])
    for start in range(0, tuples.shape[0], cfg.chunk_size):
        rows = np.arange(start, min(start + cfg.chunk_size, tuples.shape[0]))
        block = joint.tuple_thetas(rows)
        independent = sum(prior.logpdf(block[:, k, :]) for k in range(block.shape[1]))
        with np.errstate(invalid="ignore"):
            ratio = hier_logprior_batch(block, hier) - independent
        log_w[rows] = np.where(np.isnan(ratio), -np.inf, ratio)

    if not np.isfinite(log_w).any():
        logger.error("All %d joint candidates have zero prior ratio", tuples.shape[0])
        raise PoolingError("every candidate tuple has zero hierarchical prior weight")
    log_w = normalize_log_weights(log_w)
    joint = JointEnsemble(joint.area_ids, tuples, log_w, joint.ensembles)
    ess = joint.ess
    logger.info("Pooled %d areas over %d candidates: ESS %.1f", joint.n_areas, tuples.shape[0], ess)
    if ess < cfg.min_ess:
        logger.warning("Joint ESS %.1f is below %.0f; increase the candidate count", ess, cfg.min_ess)
    return joint


# ---------------------------------------------------------------------
# Trajectories
# ---------------------------------------------------------------------
def _dataset(datasets: Mapping[str, AreaDataset], area_id: str) -> AreaDataset:
    try:
        return datasets[area_id]
    except KeyError:
        raise PoolingError(f"no dataset supplied for area {area_id}") from None


def pooled_trajectories(
    joint: JointEnsemble,
    datasets: Mapping[str, AreaDataset],
    n_draws: int,
    seed: int = 0,
    dynamics: Optional[DynamicsConfig] = None,
) -> Dict[str, TrajectoryBatch]:
    """Resample tuples and project every area; keys follow joint.area_ids."""
    rows = joint.resample_rows(n_draws, seed)
    out = {}
    for k, area_id in enumerate(joint.area_ids):
        demog = _dataset(datasets, area_id).demography
        out[area_id] = project_batch(joint.area_thetas(k, rows), demog, cfg=dynamics)
    return out


def ensemble_trajectories(
    ens: WeightedEnsemble,
    ds: AreaDataset,
    n_draws: int,
    seed: int = 0,
    dynamics: Optional[DynamicsConfig] = None,
) -> TrajectoryBatch:
    """Independent-model trajectory draws of one area."""
    rows = resample_indices(ens.weights, n_draws, np.random.default_rng(seed))
    return project_batch(ens.thetas[rows], ds.demography, cfg=dynamics)


def trajectory_quantiles(batches: Mapping[str, TrajectoryBatch], output: str = "prevalence") -> pd.DataFrame:
    """Median and central 90% band per area and year."""
    frames = [quantile_frame(area_id, b.years, b.output(output)) for area_id, b in batches.items()]
    if not frames:
        return pd.DataFrame(columns=QUANTILE_COLUMNS)
    return pd.concat(frames, ignore_index=True)


# ---------------------------------------------------------------------
# Cross-area correlation
# ---------------------------------------------------------------------
def _source_projections(
    joint: JointEnsemble,
    datasets: Mapping[str, AreaDataset],
    dynamics: Optional[DynamicsConfig],
) -> List[Tuple[TrajectoryBatch, np.ndarray]]:
    """Project each distinct sample once per area; return the batch and tuple->row map."""
    projections = []
    for k, area_id in enumerate(joint.area_ids):
        unique, inverse = np.unique(joint.indices[:, k], return_inverse=True)
        batch = project_batch(joint.ensembles[k].thetas[unique], _dataset(datasets, area_id).demography, cfg=dynamics)
        projections.append((batch, inverse.reshape(-1)))
    return projections


def _correlation_at(
    joint: JointEnsemble,
    projections: List[Tuple[TrajectoryBatch, np.ndarray]],
    output: str,
    year: int,
) -> np.ndarray:
    columns = []
    for area_id, (batch, inverse) in zip(joint.area_ids, projections):
        col = int(year) - int(batch.years[0])
        if not 0 <= col < len(batch.years):
            raise PoolingError(f"year {year} outside the projection range of area {area_id}")
        columns.append(batch.output(output)[inverse, col])
    corr = weighted_correlation(np.column_stack(columns), joint.weights)
    if np.isnan(np.diag(corr)).any():
        missing = [a for a, d in zip(joint.area_ids, np.diag(corr)) if np.isnan(d)]
        logger.warning("No posterior variance of %s in %d for %s; correlation missing", output, year, missing)
    return corr


def cross_area_correlation(
    joint: JointEnsemble,
    datasets: Mapping[str, AreaDataset],
    output: str = "prevalence",
    year: int = 2000,
    dynamics: Optional[DynamicsConfig] = None,
) -> np.ndarray:
    """K x K weighted Pearson correlation of `output` in `year` across tuples."""
    return _correlation_at(joint, _source_projections(joint, datasets, dynamics), output, year)


def correlation_frame(
    joint: JointEnsemble,
    datasets: Mapping[str, AreaDataset],
    outputs: Sequence[str],
    years: Sequence[int],
    dynamics: Optional[DynamicsConfig] = None,
) -> pd.DataFrame:
    """Tidy correlations for every requested output and year."""
    projections = _source_projections(joint, datasets, dynamics)
    rows = []
    for output in outputs:
        for year in years:
            corr = _correlation_at(joint, projections, output, year)
            for i, area_i in enumerate(joint.area_ids):
                for j, area_j in enumerate(joint.area_ids):
                    rows.append((output, int(year), area_i, area_j, corr[i, j]))
    return pd.DataFrame(rows, columns=CORRELATION_COLUMNS)
