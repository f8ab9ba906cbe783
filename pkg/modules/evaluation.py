# modules/evaluation.py
"""
Predictive evaluation of the independent and hierarchical models.

The truncation protocol keeps the middle third of an area's data years for ANC
and only its earliest survey point; expected log-likelihoods of the full and
truncated data are then compared between models. `simulate_dataset` produces
synthetic areas with a known truth for the same machinery.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field
from scipy.stats import norm
from tqdm import tqdm

from config import config
from logging_config import configure_logger
from modules.data_model import (
    AncObservation,
    AreaDataset,
    Demography,
    NpbsObservation,
    ParamVector,
    data_years,
)
from modules.dynamics import DynamicsConfig, project
from modules.errors import DataValidationError, TruncationError
from modules.likelihood import DatasetLikelihood, LikelihoodConfig
from modules.pooling import JointEnsemble, PoolingConfig, combine, reweight
from modules.priors import HierPriorConfig, IndependentPrior
from modules.sampler import ImisConfig, WeightedEnsemble, imis_fit
from modules.utils import child_seed

logger = configure_logger("evaluation")

REPORT_COLUMNS = ["area", "n_data_years", "n_anc_sites", "d_full_full", "d_full_trunc", "d_trunc_trunc"]
SCORE_COLUMNS = [
    "indep_full_full", "hier_full_full",
    "indep_full_trunc", "hier_full_trunc",
    "indep_trunc_trunc", "hier_trunc_trunc",
]
# share of resampled draws with zero likelihood behind each score
INADMISSIBLE_COLUMNS = [f"{name}_inadmissible" for name in SCORE_COLUMNS]


# ---------------------------------------------------------------------
# Truncation
# ---------------------------------------------------------------------
def block_sizes(n_years: int) -> Tuple[int, int, int]:
    """Sizes of the three contiguous blocks; extras go to the middle block, then the last."""
    first = math.ceil(n_years / 3)
    middle = math.ceil((n_years - first) / 2)
    return first, middle, n_years - first - middle


def truncate(ds: AreaDataset) -> AreaDataset:
    """Keep ANC rows of the middle block of data years and the earliest NPBS point."""
    years = data_years(ds)
    if len(years) < 3:
        logger.error("Area %s has %d data years; cannot truncate", ds.area_id, len(years))
        raise TruncationError(f"area {ds.area_id}: cannot truncate {len(years)} data years (need >= 3)")
    first, middle, _ = block_sizes(len(years))
    kept_years = set(years[first:first + middle])
    anc = [obs for obs in ds.anc if obs.year in kept_years]
    npbs = sorted(ds.npbs, key=lambda o: o.year)[:1]
    logger.debug(
        "Truncated %s: ANC years %s kept (%d of %d rows), %d NPBS",
        ds.area_id, sorted(kept_years), len(anc), len(ds.anc), len(npbs),
    )
    return ds.with_observations(anc=anc, npbs=npbs)


# ---------------------------------------------------------------------
# Expected log-likelihood
# ---------------------------------------------------------------------
def _as_thetas(samples: Union[np.ndarray, Sequence[ParamVector]]) -> np.ndarray:
    if isinstance(samples, np.ndarray):
        return np.atleast_2d(samples.astype(float))
    return np.array([s.as_array() for s in samples], dtype=float)


@dataclass(frozen=True)
class LoglikScore:
    """Expected log-likelihood and the share of samples with zero likelihood."""

    value: float
    inadmissible_share: float


def score_samples(
    samples: Union[np.ndarray, Sequence[ParamVector]],
    ds: AreaDataset,
    cfg: Optional[LikelihoodConfig] = None,
    dynamics: Optional[DynamicsConfig] = None,
) -> LoglikScore:
    """Mean total log-likelihood of `ds` over posterior samples, with its inadmissible share.

    Any inadmissible sample makes the mean -inf.
    """
    thetas = _as_thetas(samples)
    if thetas.shape[0] == 0:
        raise ValueError("expected_loglik needs at least one sample")
    values = DatasetLikelihood(ds, cfg, dynamics)(thetas)
    inadmissible = float(np.mean(~np.isfinite(values)))
    if inadmissible > 0:
        logger.warning("Area %s: %.1f%% of samples are inadmissible", ds.area_id, 100 * inadmissible)
        return LoglikScore(-math.inf, inadmissible)
    return LoglikScore(float(values.mean()), 0.0)


def expected_loglik(
    samples: Union[np.ndarray, Sequence[ParamVector]],
    ds: AreaDataset,
    cfg: Optional[LikelihoodConfig] = None,
    dynamics: Optional[DynamicsConfig] = None,
) -> float:
    """Mean total log-likelihood of `ds` over posterior samples."""
    return score_samples(samples, ds, cfg, dynamics).value


# ---------------------------------------------------------------------
# Scenario table
# ---------------------------------------------------------------------
class _Scorer:
    """Evaluates one area under matched independent and hierarchical joint ensembles."""

    def __init__(self, n_samples: int, likelihood, dynamics):
        self.n_samples = n_samples
        self.likelihood = likelihood
        self.dynamics = dynamics

    def __call__(self, joint: JointEnsemble, k: int, ds: AreaDataset, seed: int) -> LoglikScore:
        rows = joint.resample_rows(self.n_samples, seed)
        return score_samples(joint.area_thetas(k, rows), ds, self.likelihood, self.dynamics)


def scenario_table(
    areas: Sequence[AreaDataset],
    seed: int = 0,
    prior: Optional[IndependentPrior] = None,
    hier: Optional[HierPriorConfig] = None,
    imis_cfg: Optional[ImisConfig] = None,
    pooling_cfg: Optional[PoolingConfig] = None,
    likelihood: Optional[LikelihoodConfig] = None,
    dynamics: Optional[DynamicsConfig] = None,
    n_samples: Optional[int] = None,
) -> pd.DataFrame:
    """Hierarchical-minus-independent expected log-likelihoods for every area of one country.

    Scenario 1 fits all areas on full data. Scenario 2 is run once per area:
    that area truncated, the others full. Both models are scored on the same
    candidate tuples with the same resampling seed, so equal posteriors give
    differences of exactly zero.
    """
    if len(areas) < 2:
        logger.error("scenario_table needs at least two areas, got %d", len(areas))
        raise DataValidationError("scenario_table needs at least two areas of one country")
    prior = prior or IndependentPrior()
    hier = hier or HierPriorConfig.from_lambda(prior=prior)
    imis_cfg = imis_cfg or ImisConfig()
    pooling_cfg = pooling_cfg or PoolingConfig()
    n_samples = n_samples or config.IMIS["n_resample"]
    score = _Scorer(n_samples, likelihood, dynamics)

    def fit(ds: AreaDataset, scenario: int, k: int) -> WeightedEnsemble:
        cfg = imis_cfg.model_copy(update={"rng_seed": child_seed(seed, scenario, k)})
        return imis_fit(ds, prior, cfg, likelihood, dynamics)

    def pooled(ensembles: List[WeightedEnsemble], scenario: int, k: int) -> Tuple[JointEnsemble, JointEnsemble]:
        tuples = combine(ensembles, pooling_cfg.n_candidates, child_seed(seed, scenario, k, 1))
        return (
            reweight(tuples, ensembles, prior, None, pooling_cfg),
            reweight(tuples, ensembles, prior, hier, pooling_cfg),
        )

    full = [fit(ds, 1, k) for k, ds in enumerate(tqdm(areas, desc="full-data fits", disable=None))]
    indep_full, hier_full = pooled(full, 1, 0)

    rows = []
    for k, ds in enumerate(tqdm(areas, desc="truncated scenarios", disable=None)):
        truncated = truncate(ds)
        ensembles = list(full)
        ensembles[k] = fit(truncated, 2, k)
        indep_trunc, hier_trunc = pooled(ensembles, 2, k)

        s = child_seed(seed, 3, k)
        results = {
            "indep_full_full": score(indep_full, k, ds, s),
            "hier_full_full": score(hier_full, k, ds, s),
            "indep_full_trunc": score(indep_trunc, k, ds, s),
            "hier_full_trunc": score(hier_trunc, k, ds, s),
            "indep_trunc_trunc": score(indep_trunc, k, truncated, s),
            "hier_trunc_trunc": score(hier_trunc, k, truncated, s),
        }
        scores = {name: r.value for name, r in results.items()}
        rows.append(
            {
                "area": ds.area_id,
                "n_data_years": len(data_years(ds)),
                "n_anc_sites": ds.n_anc_sites,
                "d_full_full": scores["hier_full_full"] - scores["indep_full_full"],
                "d_full_trunc": scores["hier_full_trunc"] - scores["indep_full_trunc"],
                "d_trunc_trunc": scores["hier_trunc_trunc"] - scores["indep_trunc_trunc"],
                **scores,
                **{f"{name}_inadmissible": r.inadmissible_share for name, r in results.items()},
            }
        )
        logger.info(
            "Area %s: d(full,full)=%.2f d(full,trunc)=%.2f d(trunc,trunc)=%.2f",
            ds.area_id, rows[-1]["d_full_full"], rows[-1]["d_full_trunc"], rows[-1]["d_trunc_trunc"],
        )
    return pd.DataFrame(rows, columns=REPORT_COLUMNS + SCORE_COLUMNS + INADMISSIBLE_COLUMNS)


# ---------------------------------------------------------------------
# Synthetic data
# ---------------------------------------------------------------------
class SimulationConfig(BaseModel):
    """Survey design of a synthetic area."""

    model_config = ConfigDict(frozen=True)

    anc_sample_size: int = Field(default=300, ge=1)
    npbs_sample_size: int = Field(default=5000, ge=1)
    # None: one survey in the last ANC year; empty: no survey
    npbs_years: Optional[Tuple[int, ...]] = None
    sigma_site: float = Field(default_factory=lambda: config.LIKELIHOOD["sigma_site"], ge=0.0)
    sigma_extra: float = Field(default=0.0, ge=0.0)


def simulate_dataset(
    truth: ParamVector,
    demog: Demography,
    site_count: int,
    years: Sequence[int],
    seed: int = 0,
    cfg: Optional[SimulationConfig] = None,
    area_id: str = "synthetic",
    country: Optional[str] = None,
    dynamics: Optional[DynamicsConfig] = None,
) -> AreaDataset:
    """Draw ANC and NPBS data from the model at `truth`."""
    cfg = cfg or SimulationConfig()
    years = sorted(int(y) for y in years)
    npbs_years = sorted(cfg.npbs_years) if cfg.npbs_years is not None else years[-1:]
    outside = [y for y in (*years, *npbs_years) if not demog.covers(y)]
    if outside:
        logger.error("Simulation years %s outside demography", outside)
        raise DataValidationError(f"simulation years {outside} outside demography range")

    rng = np.random.default_rng(seed)
    traj = project(truth, demog, cfg=dynamics)
    rho = {int(y): float(traj.rho[traj.index(y)]) for y in set(years) | set(npbs_years)}

    anc: List[AncObservation] = []
    for s in range(site_count):
        site_effect = rng.normal(0.0, cfg.sigma_site) if cfg.sigma_site > 0 else 0.0
        for year in years:
            noise = rng.normal(0.0, cfg.sigma_extra) if cfg.sigma_extra > 0 else 0.0
            p = norm.cdf(norm.ppf(np.clip(rho[year], 1e-12, 1 - 1e-12)) + truth.beta4 + site_effect + noise)
            positives = rng.binomial(cfg.anc_sample_size, p)
            anc.append(
                AncObservation(
                    site_id=f"site{s + 1:02d}",
                    year=year,
                    prevalence=positives / cfg.anc_sample_size,
                    sample_size=cfg.anc_sample_size,
                )
            )

    npbs: List[NpbsObservation] = []
    n = cfg.npbs_sample_size
    for year in npbs_years:
        p_hat = rng.binomial(n, rho[year]) / n
        p_star = (p_hat * n + 0.5) / (n + 1.0)
        npbs.append(NpbsObservation(year=year, prevalence=p_hat, std_error=math.sqrt(p_star * (1 - p_star) / n)))

    logger.info(
        "Simulated area %s: %d sites x %d years, %d NPBS points (seed %d)",
        area_id, site_count, len(years), len(npbs), seed,
    )
    return AreaDataset(area_id=area_id, anc=tuple(anc), npbs=tuple(npbs), demography=demog, country=country)
