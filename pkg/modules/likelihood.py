# modules/likelihood.py
"""
Probit-scale likelihood of ANC and NPBS prevalence given model trajectories.

ANC: observed prevalences at one clinic share a site effect b_s ~ N(0, sigma_site^2).
Integrating it out gives, per site, a multivariate normal on the probit scale with
compound-symmetry covariance diag(v_t + sigma_extra^2) + sigma_site^2 J, evaluated
here in closed form (determinant lemma + Sherman-Morrison).

NPBS: independent normals on the probit scale with delta-method standard errors.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.stats import norm

from config import config
from logging_config import configure_logger
from modules.data_model import AncObservation, AreaDataset, NpbsObservation, ParamVector
from modules.dynamics import DynamicsConfig, Trajectory, project_batch

logger = configure_logger("likelihood")

LOG_2PI = float(np.log(2.0 * np.pi))


class LikelihoodConfig(BaseModel):
    """Variance settings of the probit random-effects likelihood."""

    model_config = ConfigDict(frozen=True)

    sigma_site: float = Field(default_factory=lambda: config.LIKELIHOOD["sigma_site"], gt=0.0)
    sigma_extra: float = Field(default_factory=lambda: config.LIKELIHOOD["sigma_extra"], gt=0.0)
    continuity: float = Field(default_factory=lambda: config.LIKELIHOOD["continuity"], gt=0.0)
    # model prevalence and NPBS point estimates are clipped to [floor, 1 - floor] before the probit
    probit_floor: float = Field(default=1e-6, gt=0.0, lt=0.5)


def probit_transform(p, n, c: float = 0.5):
    """Continuity-corrected probit value and its delta-method variance."""
    p = np.asarray(p, dtype=float)
    n = np.asarray(n, dtype=float)
    p_star = (p * n + c) / (n + 2.0 * c)
    w = norm.ppf(p_star)
    v = p_star * (1.0 - p_star) / (n * norm.pdf(w) ** 2)
    if w.ndim == 0:
        return float(w), float(v)
    return w, v


def _probit_prevalence(rho: np.ndarray, floor: float) -> np.ndarray:
    return norm.ppf(np.clip(rho, floor, 1.0 - floor))


# ---------------------------------------------------------------------
# Per-site design (precomputed once per dataset)
# ---------------------------------------------------------------------
@dataclass(frozen=True)
class _SiteDesign:
    site_id: str
    years: np.ndarray
    w: np.ndarray
    D: np.ndarray  # v + sigma_extra^2


def _site_designs(anc: Sequence[AncObservation], cfg: LikelihoodConfig) -> List[_SiteDesign]:
    sites: Dict[str, List[AncObservation]] = {}
    for obs in anc:
        sites.setdefault(obs.site_id, []).append(obs)
    designs = []
    for site_id, series in sites.items():
        w, v = probit_transform(
            [o.prevalence for o in series], [o.sample_size for o in series], cfg.continuity
        )
        designs.append(
            _SiteDesign(
                site_id=site_id,
                years=np.array([o.year for o in series], dtype=int),
                w=np.atleast_1d(w),
                D=np.atleast_1d(v) + cfg.sigma_extra ** 2,
            )
        )
    return designs


def _year_columns(years, first_year: int, n_years: int, label: str) -> np.ndarray:
    """Trajectory columns of observation years; years outside the projection are an error."""
    years = np.asarray(years, dtype=int)
    idx = years - first_year
    outside = (idx < 0) | (idx >= n_years)
    if outside.any():
        last_year = first_year + n_years - 1
        bad = sorted(set(years[outside].tolist()))
        logger.error("%s years %s fall outside the trajectory %d-%d", label, bad, first_year, last_year)
        raise ValueError(f"{label} years {bad} outside the trajectory {first_year}-{last_year}")
    return idx


def _anc_loglik_matrix(
    probit_rho: np.ndarray,
    first_year: int,
    designs: Sequence[_SiteDesign],
    beta4: np.ndarray,
    cfg: LikelihoodConfig,
) -> np.ndarray:
    """ANC log-density for each row of probit_rho (n_draws, n_years)."""
    total = np.zeros(probit_rho.shape[0])
    s2 = cfg.sigma_site ** 2
    for site in designs:
        cols = _year_columns(site.years, first_year, probit_rho.shape[1], f"ANC site {site.site_id}")
        d = site.w[None, :] - probit_rho[:, cols] - beta4[:, None]
        a = 1.0 / site.D
        denom = 1.0 + s2 * a.sum()
        logdet = np.log(site.D).sum() + np.log(denom)
        quad = (d ** 2 * a).sum(axis=1) - s2 * (d @ a) ** 2 / denom
        total += -0.5 * (len(site.D) * LOG_2PI + logdet + quad)
    return total


def _npbs_loglik_matrix(
    probit_rho: np.ndarray,
    first_year: int,
    npbs: Sequence[NpbsObservation],
    floor: float,
) -> np.ndarray:
    if not npbs:
        return np.zeros(probit_rho.shape[0])
    p = np.clip([o.prevalence for o in npbs], floor, 1.0 - floor)
    w = norm.ppf(p)
    se = np.array([o.std_error for o in npbs]) / norm.pdf(w)
    idx = _year_columns([o.year for o in npbs], first_year, probit_rho.shape[1], "NPBS")
    return norm.logpdf(w[None, :], loc=probit_rho[:, idx], scale=se[None, :]).sum(axis=1)


# ---------------------------------------------------------------------
# Public API
# ---------------------------------------------------------------------
def anc_loglik(
    traj: Trajectory,
    anc: Sequence[AncObservation],
    beta4: float,
    cfg: Optional[LikelihoodConfig] = None,
) -> float:
    """ANC log-density with the per-clinic effect integrated out."""
    cfg = cfg or LikelihoodConfig()
    if not anc:
        return 0.0
    _year_columns([o.year for o in anc], int(traj.years[0]), len(traj.years), "ANC")
    if not traj.admissible:
        return -np.inf
    probit_rho = _probit_prevalence(np.asarray(traj.rho)[None, :], cfg.probit_floor)
    return float(
        _anc_loglik_matrix(probit_rho, int(traj.years[0]), _site_designs(anc, cfg), np.array([beta4]), cfg)[0]
    )


def npbs_loglik(
    traj: Trajectory,
    npbs: Sequence[NpbsObservation],
    cfg: Optional[LikelihoodConfig] = None,
) -> float:
    """Survey log-density; no clinic bias applies."""
    cfg = cfg or LikelihoodConfig()
    if not npbs:
        return 0.0
    _year_columns([o.year for o in npbs], int(traj.years[0]), len(traj.years), "NPBS")
    if not traj.admissible:
        return -np.inf
    probit_rho = _probit_prevalence(np.asarray(traj.rho)[None, :], cfg.probit_floor)
    return float(_npbs_loglik_matrix(probit_rho, int(traj.years[0]), npbs, cfg.probit_floor)[0])


class DatasetLikelihood:
    """Batched log-likelihood of one area's data, callable on an (n, 8) array."""

    def __init__(
        self,
        ds: AreaDataset,
        cfg: Optional[LikelihoodConfig] = None,
        dynamics: Optional[DynamicsConfig] = None,
        year_range: Optional[Tuple[int, int]] = None,
    ):
        self.ds = ds
        self.cfg = cfg or LikelihoodConfig()
        self.dynamics = dynamics or DynamicsConfig()
        self.year_range = year_range or (ds.demography.year_start, ds.demography.year_end)
        self._designs = _site_designs(ds.anc, self.cfg)

    def __call__(self, thetas: np.ndarray) -> np.ndarray:
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        if self.ds.is_empty:
            return np.zeros(thetas.shape[0])
        batch = project_batch(thetas, self.ds.demography, self.year_range, self.dynamics)
        probit_rho = _probit_prevalence(batch.rho, self.cfg.probit_floor)
        first_year = int(batch.years[0])
        ll = _anc_loglik_matrix(probit_rho, first_year, self._designs, thetas[:, 7], self.cfg)
        ll += _npbs_loglik_matrix(probit_rho, first_year, self.ds.npbs, self.cfg.probit_floor)
        return np.where(batch.admissible & np.isfinite(ll), ll, -np.inf)


def total_loglik_batch(
    thetas: np.ndarray,
    ds: AreaDataset,
    cfg: Optional[LikelihoodConfig] = None,
    dynamics: Optional[DynamicsConfig] = None,
) -> np.ndarray:
    return DatasetLikelihood(ds, cfg, dynamics)(thetas)


def total_loglik(
    params: ParamVector,
    ds: AreaDataset,
    cfg: Optional[LikelihoodConfig] = None,
    dynamics: Optional[DynamicsConfig] = None,
) -> float:
    """Project `params` and sum the ANC and NPBS log-densities."""
    return float(total_loglik_batch(params.as_array()[None, :], ds, cfg, dynamics)[0])
