# modules/sampler.py
"""
Incremental mixture importance sampling (IMIS) for one area's posterior.

The core `imis` works on any prior exposing sample/logpdf/scale and any batched
log-likelihood callable, so toy targets run through the same code as epidemic
fits. `imis_fit` wires it to an AreaDataset.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Protocol, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.special import logsumexp
from scipy.stats import multivariate_normal

from config import config
from logging_config import configure_logger
from modules.data_model import AreaDataset, N_PARAMS, ParamVector
from modules.dynamics import DynamicsConfig
from modules.errors import NoAdmissibleDrawsError
from modules.likelihood import DatasetLikelihood, LikelihoodConfig
from modules.priors import IndependentPrior
from modules.utils import (
    effective_sample_size,
    evaluate_in_chunks,
    expected_unique_fraction,
    normalize_log_weights,
)

logger = configure_logger("sampler")


class Prior(Protocol):
    @property
    def scale(self) -> np.ndarray: ...

    def logpdf(self, x: np.ndarray) -> np.ndarray: ...

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray: ...


class ImisConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    n_initial: int = Field(default_factory=lambda: config.IMIS["n_initial"], ge=1)
    n_per_iter: int = Field(default_factory=lambda: config.IMIS["n_per_iter"], ge=2)
    max_iterations: int = Field(default_factory=lambda: config.IMIS["max_iterations"], ge=0)
    stop_max_weight: float = Field(default_factory=lambda: config.IMIS["stop_max_weight"], gt=0.0, le=1.0)
    weight_threshold: float = Field(default_factory=lambda: config.IMIS["weight_threshold"], ge=0.0, lt=1.0)
    n_resample: int = Field(default_factory=lambda: config.IMIS["n_resample"], ge=1)
    rng_seed: int = 0
    threads: int = Field(default_factory=lambda: config.THREADS, ge=1)
    chunk_size: int = Field(default=2000, ge=1)


@dataclass(frozen=True)
class ImisDiagnostics:
    iterations: int
    max_weight: float
    ess: float
    expected_unique: float
    n_evaluations: int
    history: Tuple[Dict[str, float], ...] = ()

    def to_dict(self) -> Dict[str, object]:
        return {
            "iterations": self.iterations,
            "max_weight": self.max_weight,
            "ess": self.ess,
            "expected_unique": self.expected_unique,
            "n_evaluations": self.n_evaluations,
            "history": list(self.history),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, object]) -> "ImisDiagnostics":
        return cls(
            iterations=int(data["iterations"]),
            max_weight=float(data["max_weight"]),
            ess=float(data["ess"]),
            expected_unique=float(data["expected_unique"]),
            n_evaluations=int(data.get("n_evaluations", 0)),
            history=tuple(data.get("history", ())),
        )


@dataclass(frozen=True)
class WeightedEnsemble:
    """Posterior draws with normalised importance log-weights.

    thetas has one row per stored sample; for epidemic fits the columns follow
    PARAM_NAMES.
    """

    thetas: np.ndarray
    log_weights: np.ndarray
    loglik: np.ndarray
    sampler_logdensity: np.ndarray
    diagnostics: Optional[ImisDiagnostics] = None
    area_id: Optional[str] = None

    def __post_init__(self):
        thetas = np.atleast_2d(np.asarray(self.thetas, dtype=float))
        n = thetas.shape[0]
        arrays = {
            name: np.asarray(getattr(self, name), dtype=float).ravel()
            for name in ("log_weights", "loglik", "sampler_logdensity")
        }
        if n == 0:
            raise ValueError("WeightedEnsemble needs at least one sample")
        for name, arr in arrays.items():
            if arr.shape[0] != n:
                raise ValueError(f"{name} has {arr.shape[0]} entries for {n} samples")
        total = logsumexp(arrays["log_weights"])
        if not abs(total) < 1e-8:
            raise ValueError(f"log_weights are not normalised (logsumexp={total})")
        object.__setattr__(self, "thetas", thetas)
        for name, arr in arrays.items():
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return self.thetas.shape[0]

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    @property
    def ess(self) -> float:
        return effective_sample_size(self.log_weights)

    @property
    def samples(self) -> List[ParamVector]:
        return [ParamVector.from_array(row) for row in self.thetas]

    def mean(self) -> np.ndarray:
        return self.weights @ self.thetas

    def covariance(self) -> np.ndarray:
        centred = self.thetas - self.mean()
        return (centred * self.weights[:, None]).T @ centred

    def median(self) -> np.ndarray:
        """Weighted per-column median."""
        w = self.weights
        out = np.empty(self.thetas.shape[1])
        for j in range(self.thetas.shape[1]):
            order = np.argsort(self.thetas[:, j], kind="stable")
            cdf = np.cumsum(w[order])
            out[j] = self.thetas[order[np.searchsorted(cdf, 0.5)], j]
        return out


# ---------------------------------------------------------------------
# Resampling
# ---------------------------------------------------------------------
def resample_indices(weights: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """Multinomial draw of n indices, returned in shuffled order."""
    weights = np.asarray(weights, dtype=float)
    counts = rng.multinomial(n, weights / weights.sum())
    return rng.permutation(np.repeat(np.arange(weights.size), counts))


def resample(ens: WeightedEnsemble, n: int, seed: int = 0) -> List[ParamVector]:
    """n parameter vectors drawn with replacement in proportion to the weights."""
    if n < 1:
        raise ValueError(f"resample size must be positive, got {n}")
    idx = resample_indices(ens.weights, n, np.random.default_rng(seed))
    return [ParamVector.from_array(ens.thetas[i]) for i in idx]


# ---------------------------------------------------------------------
# IMIS
# ---------------------------------------------------------------------
@dataclass
class _Mixture:
    """Sampling density: the prior with mass n_initial plus equal-mass Gaussians."""

    n_initial: int
    n_per_iter: int
    components: List[Tuple[np.ndarray, np.ndarray]] = field(default_factory=list)

    def log_density(self, log_prior: np.ndarray, component_logpdf: List[np.ndarray]) -> np.ndarray:
        n_total = self.n_initial + self.n_per_iter * len(self.components)
        terms = [np.log(self.n_initial / n_total) + log_prior]
        terms += [np.log(self.n_per_iter / n_total) + lp for lp in component_logpdf]
        return logsumexp(np.vstack(terms), axis=0)


def _neighbour_covariance(
    x: np.ndarray, weights: np.ndarray, centre_idx: int, n_neighbours: int, prior_scale: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    centre = x[centre_idx]
    dist = (((x - centre) / prior_scale) ** 2).sum(axis=1)
    k = min(n_neighbours, x.shape[0])
    nearest = np.argpartition(dist, k - 1)[:k]

    w = weights[nearest] + 1.0 / x.shape[0]
    w = w / w.sum()
    diff = x[nearest] - centre
    cov = (diff * w[:, None]).T @ diff / (1.0 - np.sum(w ** 2))
    try:
        np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        logger.warning("Neighbour covariance at sample %d is singular; regularising", centre_idx)
        cov = cov + np.diag(1e-6 * prior_scale ** 2)
    return centre, cov


def imis(
    loglik_fn: Callable[[np.ndarray], np.ndarray],
    prior: Prior,
    cfg: Optional[ImisConfig] = None,
    label: str = "target",
) -> WeightedEnsemble:
    """Run IMIS on a batched log-likelihood and return the weighted posterior sample."""
    cfg = cfg or ImisConfig()
    rng = np.random.default_rng(cfg.rng_seed)
    scale = np.asarray(prior.scale, dtype=float)

    def evaluate(x: np.ndarray, lp: np.ndarray) -> np.ndarray:
        ll = np.full(x.shape[0], -np.inf)
        ok = np.isfinite(lp)
        if ok.any():
            ll[ok] = evaluate_in_chunks(loglik_fn, x[ok], cfg.threads, cfg.chunk_size)
        return ll

    x = prior.sample(cfg.n_initial, rng)
    log_prior = prior.logpdf(x)
    loglik = evaluate(x, log_prior)
    n_evaluations = x.shape[0]
    if not np.isfinite(loglik).any():
        logger.error("IMIS for %s: all %d initial log-likelihoods are -inf", label, x.shape[0])
        raise NoAdmissibleDrawsError(f"{label}: no admissible draws among {x.shape[0]} prior samples")

    mixture = _Mixture(cfg.n_initial, cfg.n_per_iter)
    component_logpdf: List[np.ndarray] = []
    history: List[Dict[str, float]] = []

    while True:
        log_q = mixture.log_density(log_prior, component_logpdf)
        log_target = log_prior + loglik
        log_w = normalize_log_weights(np.where(np.isfinite(log_target), log_target - log_q, -np.inf))
        weights = np.exp(log_w)
        max_weight = float(weights.max())
        ess = effective_sample_size(log_w)
        history.append({"iteration": len(mixture.components), "max_weight": max_weight, "ess": ess})
        logger.info(
            "IMIS %s iteration %d: %d samples, max weight %.4f, ESS %.1f",
            label, len(mixture.components), x.shape[0], max_weight, ess,
        )
        if max_weight < cfg.stop_max_weight or len(mixture.components) >= cfg.max_iterations:
            break

        centre, cov = _neighbour_covariance(x, weights, int(np.argmax(weights)), cfg.n_per_iter, scale)
        mixture.components.append((centre, cov))
        new_x = rng.multivariate_normal(centre, cov, size=cfg.n_per_iter, method="cholesky")
        new_log_prior = prior.logpdf(new_x)
        new_loglik = evaluate(new_x, new_log_prior)
        n_evaluations += new_x.shape[0]

        component_logpdf = [
            np.concatenate([lp, multivariate_normal.logpdf(new_x, mean=m, cov=c).reshape(-1)])
            for lp, (m, c) in zip(component_logpdf, mixture.components[:-1])
        ]
        x = np.vstack([x, new_x])
        log_prior = np.concatenate([log_prior, new_log_prior])
        loglik = np.concatenate([loglik, new_loglik])
        component_logpdf.append(multivariate_normal.logpdf(x, mean=centre, cov=cov).reshape(-1))

    if max_weight >= cfg.stop_max_weight:
        logger.warning(
            "IMIS %s stopped at the iteration cap (%d) with max weight %.4f",
            label, cfg.max_iterations, max_weight,
        )

    keep = weights > cfg.weight_threshold
    kept_log_w = normalize_log_weights(log_w[keep])
    diagnostics = ImisDiagnostics(
        iterations=len(mixture.components),
        max_weight=float(np.exp(kept_log_w).max()),
        ess=effective_sample_size(kept_log_w),
        expected_unique=expected_unique_fraction(np.exp(kept_log_w), cfg.n_resample),
        n_evaluations=n_evaluations,
        history=tuple(history),
    )
    logger.info(
        "IMIS %s finished: %d iterations, %d of %d samples kept, ESS %.1f",
        label, diagnostics.iterations, int(keep.sum()), x.shape[0], diagnostics.ess,
    )
    return WeightedEnsemble(
        thetas=x[keep],
        log_weights=kept_log_w,
        loglik=loglik[keep],
        sampler_logdensity=log_q[keep],
        diagnostics=diagnostics,
        area_id=label,
    )


def imis_fit(
    ds: AreaDataset,
    prior: Optional[IndependentPrior] = None,
    cfg: Optional[ImisConfig] = None,
    likelihood: Optional[LikelihoodConfig] = None,
    dynamics: Optional[DynamicsConfig] = None,
) -> WeightedEnsemble:
    """Independent-model posterior of one area."""
    prior = prior or IndependentPrior()
    logger.info("Fitting area %s (%d ANC, %d NPBS observations)", ds.area_id, len(ds.anc), len(ds.npbs))
    ensemble = imis(DatasetLikelihood(ds, likelihood, dynamics), prior, cfg, label=ds.area_id)
    if ensemble.thetas.shape[1] != N_PARAMS:
        raise ValueError(f"expected {N_PARAMS} parameter columns, got {ensemble.thetas.shape[1]}")
    return ensemble
