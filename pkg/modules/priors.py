# modules/priors.py
"""
Priors on the r-trend parameter vector.

* IndependentPrior: one informative prior per area (t0 uniform, the rest normal).
* HierPriorConfig / hier_logprior: the two-level prior for K areas of one
  country, theta_ij | mu_j ~ N(mu_j, sigma1_j^2), mu_j ~ N(mu0_j, sigma0_j^2),
  with mu integrated out.
* empirical_lambda: method-of-moments estimate of lambda_j = sigma1_j^2 / sigma0_j^2
  from per-area posterior medians grouped by country.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy.stats import norm

from logging_config import configure_logger
from modules.data_model import N_PARAMS, PARAM_NAMES, ParamVector
from modules.errors import DataValidationError

logger = configure_logger("priors")

LOG_2PI = math.log(2.0 * math.pi)

T0_BOUNDS: Tuple[float, float] = (1970.0, 1990.0)
# t1, log_r0, beta0, beta1, beta2, beta3, beta4 as (mean, sd)
GAUSSIAN_PRIORS: Dict[str, Tuple[float, float]] = {
    "t1": (20.0, 4.5),
    "log_r0": (0.42, 0.23),
    "beta0": (0.46, 0.12),
    "beta1": (0.17, 0.07),
    "beta2": (-0.68, 0.24),
    "beta3": (-0.038, 0.009),
    "beta4": (0.14, 0.045),
}
# within/between variance ratios in PARAM_NAMES order (beta0 before beta1,
# which some source tables list the other way round)
DEFAULT_LAMBDA: Tuple[float, ...] = (0.35, 0.24, 2.15, 0.40, 0.28, 2.19, 0.61, 0.12)

ThetaBlock = Union[np.ndarray, Sequence[ParamVector]]


def _as_matrix(thetas: ThetaBlock) -> np.ndarray:
    if isinstance(thetas, np.ndarray):
        return np.atleast_2d(thetas.astype(float))
    return np.array([t.as_array() for t in thetas], dtype=float).reshape(-1, N_PARAMS)


# ---------------------------------------------------------------------
# Independent prior
# ---------------------------------------------------------------------
class IndependentPrior(BaseModel):
    """Uniform t0 and independent normals for the other seven parameters."""

    model_config = ConfigDict(frozen=True)

    t0_bounds: Tuple[float, float] = T0_BOUNDS
    gaussian: Dict[str, Tuple[float, float]] = Field(default_factory=lambda: dict(GAUSSIAN_PRIORS))

    @model_validator(mode="after")
    def _check(self) -> "IndependentPrior":
        low, high = self.t0_bounds
        if not high > low:
            raise ValueError(f"t0 bounds must be increasing, got {self.t0_bounds}")
        if set(self.gaussian) != set(PARAM_NAMES[1:]):
            raise ValueError(f"gaussian priors must cover {PARAM_NAMES[1:]}")
        for name, (_, sd) in self.gaussian.items():
            if not sd > 0:
                raise ValueError(f"prior SD for {name} must be positive, got {sd}")
        return self

    def with_overrides(self, overrides: Mapping[str, Sequence[float]]) -> "IndependentPrior":
        """Replace (mean, sd) per parameter; for t0 the pair is (low, high)."""
        gaussian = dict(self.gaussian)
        bounds = self.t0_bounds
        for name, pair in overrides.items():
            if name not in PARAM_NAMES:
                raise DataValidationError(f"unknown prior parameter {name!r}")
            a, b = (float(v) for v in pair)
            if name == "t0":
                bounds = (a, b)
            else:
                gaussian[name] = (a, b)
        return IndependentPrior(t0_bounds=bounds, gaussian=gaussian)

    @property
    def mean(self) -> np.ndarray:
        low, high = self.t0_bounds
        return np.array([(low + high) / 2.0] + [self.gaussian[n][0] for n in PARAM_NAMES[1:]])

    @property
    def variance(self) -> np.ndarray:
        low, high = self.t0_bounds
        return np.array([(high - low) ** 2 / 12.0] + [self.gaussian[n][1] ** 2 for n in PARAM_NAMES[1:]])

    @property
    def scale(self) -> np.ndarray:
        return np.sqrt(self.variance)

    def t0_logpdf(self, t0: np.ndarray) -> np.ndarray:
        low, high = self.t0_bounds
        t0 = np.asarray(t0, dtype=float)
        return np.where((t0 >= low) & (t0 <= high), -math.log(high - low), -np.inf)

    def logpdf(self, thetas: ThetaBlock) -> np.ndarray:
        x = _as_matrix(thetas)
        lp = self.t0_logpdf(x[:, 0])
        for j, name in enumerate(PARAM_NAMES[1:], start=1):
            mean, sd = self.gaussian[name]
            lp = lp + norm.logpdf(x[:, j], loc=mean, scale=sd)
        return lp

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        out = np.empty((n, N_PARAMS))
        out[:, 0] = rng.uniform(*self.t0_bounds, size=n)
        for j, name in enumerate(PARAM_NAMES[1:], start=1):
            mean, sd = self.gaussian[name]
            out[:, j] = rng.normal(mean, sd, size=n)
        return out


def independent_logprior(theta: ParamVector, prior: Optional[IndependentPrior] = None) -> float:
    prior = prior or IndependentPrior()
    return float(prior.logpdf(theta.as_array()[None, :])[0])


@dataclass(frozen=True)
class DiagonalGaussianPrior:
    """Product of independent normals; any dimension. Used for toy targets."""

    mean: np.ndarray
    sd: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        sd = np.broadcast_to(np.asarray(self.sd, dtype=float), mean.shape).copy()
        if np.any(sd <= 0):
            raise ValueError("DiagonalGaussianPrior needs positive SDs")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "sd", sd)

    @property
    def variance(self) -> np.ndarray:
        return self.sd ** 2

    @property
    def scale(self) -> np.ndarray:
        return self.sd

    def logpdf(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return norm.logpdf(x, loc=self.mean, scale=self.sd).sum(axis=1)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.normal(self.mean, self.sd, size=(n, self.mean.size))


# ---------------------------------------------------------------------
# Hierarchical prior
# ---------------------------------------------------------------------
class HierPriorConfig(BaseModel):
    """Per-parameter (mu0, sigma0, sigma1) of the two-level prior.

    sigma0 is the between-area SD of the country mean, sigma1 the within-country
    SD of an area around it. sigma0 = 0 (lambda = inf) switches pooling off for
    that parameter. t0 uses the Gaussianised uniform (midpoint, width/sqrt(12))
    in the coupling term and keeps its uniform support.
    """

    model_config = ConfigDict(frozen=True)

    mu0: Tuple[float, ...]
    sigma0: Tuple[float, ...]
    sigma1: Tuple[float, ...]
    t0_bounds: Tuple[float, float] = T0_BOUNDS

    @field_validator("mu0", "sigma0", "sigma1")
    @classmethod
    def _eight(cls, value):
        if len(value) != N_PARAMS:
            raise ValueError(f"expected {N_PARAMS} entries, got {len(value)}")
        return tuple(float(v) for v in value)

    @model_validator(mode="after")
    def _check_sds(self) -> "HierPriorConfig":
        if any(not s > 0 for s in self.sigma1):
            raise ValueError("sigma1 must be positive for every parameter")
        if any(s < 0 for s in self.sigma0):
            raise ValueError("sigma0 must be non-negative for every parameter")
        return self

    @classmethod
    def from_lambda(
        cls,
        lam: Sequence[float] = DEFAULT_LAMBDA,
        prior: Optional[IndependentPrior] = None,
    ) -> "HierPriorConfig":
        """Split each independent-prior variance into between/within parts by lambda."""
        prior = prior or IndependentPrior()
        lam = np.asarray(lam, dtype=float)
        if lam.shape != (N_PARAMS,) or np.any(~(lam > 0)):
            logger.error("Invalid lambda vector %s", lam)
            raise DataValidationError(f"lambda must be {N_PARAMS} positive values, got {lam.tolist()}")
        total = prior.variance
        with np.errstate(invalid="ignore"):
            within = np.where(np.isinf(lam), total, total * lam / (1.0 + lam))
        between = np.where(np.isinf(lam), 0.0, total / (1.0 + lam))
        return cls(
            mu0=tuple(prior.mean),
            sigma0=tuple(np.sqrt(between)),
            sigma1=tuple(np.sqrt(within)),
            t0_bounds=prior.t0_bounds,
        )

    @property
    def lam(self) -> np.ndarray:
        s0 = np.asarray(self.sigma0) ** 2
        s1 = np.asarray(self.sigma1) ** 2
        with np.errstate(divide="ignore"):
            return np.where(s0 > 0, s1 / np.where(s0 > 0, s0, 1.0), np.inf)

    @property
    def marginal_variance(self) -> np.ndarray:
        return np.asarray(self.sigma0) ** 2 + np.asarray(self.sigma1) ** 2


def hier_coordinate_logpdf(x: np.ndarray, mu0: float, sigma0: float, sigma1: float) -> np.ndarray:
    """Log-density of K exchangeable coordinates with covariance sigma1^2 I + sigma0^2 J.

    x has shape (m, K); returns (m,).
    """
    x = np.atleast_2d(np.asarray(x, dtype=float)) - mu0
    K = x.shape[1]
    s1, s0 = sigma1 ** 2, sigma0 ** 2
    xbar = x.mean(axis=1)
    ss_within = ((x - xbar[:, None]) ** 2).sum(axis=1)
    logdet = K * math.log(s1) + math.log1p(K * s0 / s1)
    quad = ss_within / s1 + K * xbar ** 2 / (s1 + K * s0)
    return -0.5 * (K * LOG_2PI + logdet + quad)


def hier_logprior_batch(thetas: np.ndarray, cfg: HierPriorConfig) -> np.ndarray:
    """Joint log-prior for an (m, K, 8) block of area tuples."""
    thetas = np.asarray(thetas, dtype=float)
    if thetas.ndim == 2:
        thetas = thetas[None, :, :]
    if thetas.shape[1] == 0:
        logger.error("hier_logprior called with no areas")
        raise ValueError("hierarchical prior needs at least one area")
    lp = np.zeros(thetas.shape[0])
    for j in range(N_PARAMS):
        lp += hier_coordinate_logpdf(thetas[:, :, j], cfg.mu0[j], cfg.sigma0[j], cfg.sigma1[j])

    # t0: swap the Gaussian marginals for the uniform ones, keeping the coupling
    t0 = thetas[:, :, 0]
    low, high = cfg.t0_bounds
    marginal_sd = math.sqrt(cfg.sigma0[0] ** 2 + cfg.sigma1[0] ** 2)
    lp -= norm.logpdf(t0, loc=cfg.mu0[0], scale=marginal_sd).sum(axis=1)
    inside = np.all((t0 >= low) & (t0 <= high), axis=1)
    lp += np.where(inside, -t0.shape[1] * math.log(high - low), -np.inf)
    return lp


def hier_logprior(thetas: ThetaBlock, cfg: HierPriorConfig) -> float:
    """Joint log-prior of K area parameter vectors with the country mean integrated out."""
    return float(hier_logprior_batch(_as_matrix(thetas)[None, :, :], cfg)[0])


def hier_logprior_exp_form(thetas: ThetaBlock, cfg: HierPriorConfig) -> float:
    """Unnormalised log f_j summed over parameters, in the exponent form

        -[K sum_i (x_ij - xbar_j)^2 / s1_j^2 + sum_i (x_ij - mu0_j)^2 / s0_j^2] / (2 (K + s1_j^2 / s0_j^2))

    Needs sigma0 > 0. Every coordinate, t0 included, is treated as Gaussian.
    """
    x = _as_matrix(thetas)
    K = x.shape[0]
    if K == 0:
        raise ValueError("hierarchical prior needs at least one area")
    total = 0.0
    for j in range(N_PARAMS):
        s1, s0 = cfg.sigma1[j] ** 2, cfg.sigma0[j] ** 2
        col = x[:, j]
        spread = K * np.sum((col - col.mean()) ** 2) / s1
        shrink = np.sum((col - cfg.mu0[j]) ** 2) / s0
        total += -(spread + shrink) / (2.0 * (K + s1 / s0))
    return float(total)


# ---------------------------------------------------------------------
# Empirical Bayes lambda
# ---------------------------------------------------------------------
@dataclass(frozen=True)
class LambdaEstimate:
    lam: np.ndarray
    sigma_between: np.ndarray
    sigma_within: np.ndarray

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "parameter": PARAM_NAMES,
                "sigma_between": self.sigma_between,
                "sigma_within": self.sigma_within,
                "lambda": self.lam,
            }
        )


def lambda_from_sds(sigma_between: Sequence[float], sigma_within: Sequence[float]) -> np.ndarray:
    """lambda_j = sigma_within_j^2 / sigma_between_j^2; inf where sigma_between is 0."""
    between = np.asarray(sigma_between, dtype=float) ** 2
    within = np.asarray(sigma_within, dtype=float) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(between > 0, within / np.where(between > 0, between, 1.0), np.inf)


def empirical_lambda(medians: Mapping[str, Sequence[ParamVector]]) -> LambdaEstimate:
    """One-way random-effects ANOVA per parameter across country groups."""
    groups = [_as_matrix(list(areas)) for areas in medians.values()]
    if len(groups) < 2 or any(g.shape[0] < 2 for g in groups):
        logger.error("empirical_lambda needs >= 2 countries with >= 2 areas each")
        raise DataValidationError("empirical_lambda needs at least 2 countries with at least 2 areas each")

    sizes = np.array([g.shape[0] for g in groups], dtype=float)
    n_total, n_groups = sizes.sum(), len(groups)
    group_means = np.array([g.mean(axis=0) for g in groups])
    grand_mean = np.vstack(groups).mean(axis=0)

    ss_within = sum(((g - m) ** 2).sum(axis=0) for g, m in zip(groups, group_means))
    ss_between = (sizes[:, None] * (group_means - grand_mean) ** 2).sum(axis=0)
    ms_within = ss_within / (n_total - n_groups)
    ms_between = ss_between / (n_groups - 1)
    n0 = (n_total - (sizes ** 2).sum() / n_total) / (n_groups - 1)

    var_between = (ms_between - ms_within) / n0
    var_within = ms_within
    for j in np.flatnonzero(var_between <= 0):
        logger.warning(
            "Between-country variance for %s is not positive (%.3g); lambda set to inf",
            PARAM_NAMES[j], var_between[j],
        )
    var_between = np.maximum(var_between, 0.0)
    sigma_between, sigma_within = np.sqrt(var_between), np.sqrt(var_within)
    estimate = LambdaEstimate(
        lam=lambda_from_sds(sigma_between, sigma_within),
        sigma_between=sigma_between,
        sigma_within=sigma_within,
    )
    logger.info("Empirical lambda from %d countries: %s", n_groups, np.round(estimate.lam, 3).tolist())
    return estimate
