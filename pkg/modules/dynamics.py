# modules/dynamics.py
"""
Simplified EPP compartment model driven by the r-trend infection rate.

    dZ/dt = E - r Y Z/N - mu Z - a50 Z/N + M Z/N
    dY/dt = r Y Z/N - alpha Y - a50 Y/N + M Y/N

r(t) is piecewise constant within a calendar year and moves on yearly
boundaries through

    log r(t+1) - log r(t) = beta1 (beta0 - r(t)) - beta2 rho(t) + beta3 gamma(t)
    gamma(t) = (rho(t+1) - rho(t)) (t - (t0 + t1))^+ / rho(t)

The integrator works on a block of parameter draws at once (`project_batch`);
`project` is the single-draw view used by reporting code.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator

from config import config
from logging_config import configure_logger
from modules.data_model import Demography, ParamVector
from modules.errors import NumericalOverflowError

logger = configure_logger("dynamics")

TRAJECTORY_COLUMNS = ["year", "Z", "Y", "N", "rho", "r", "incidence", "hiv_deaths"]


class DynamicsConfig(BaseModel):
    """Integration settings for the compartment model."""

    model_config = ConfigDict(frozen=True)

    dt: float = Field(default_factory=lambda: config.DYNAMICS["dt"], gt=0.0, le=1.0)
    integrator: Literal["rk4", "euler"] = Field(default_factory=lambda: config.DYNAMICS["integrator"])
    seed_fraction: float = Field(default_factory=lambda: config.DYNAMICS["seed_fraction"], ge=0.0, lt=1.0)
    hiv_death_rate: float = Field(default_factory=lambda: config.DYNAMICS["hiv_death_rate"], ge=0.0)

    @model_validator(mode="after")
    def _check_dt(self) -> "DynamicsConfig":
        if abs(round(1.0 / self.dt) * self.dt - 1.0) > 1e-9:
            raise ValueError(f"dt={self.dt} does not divide a year into whole steps")
        return self

    @property
    def steps_per_year(self) -> int:
        return int(round(1.0 / self.dt))


# ---------------------------------------------------------------------
# r-trend recursion
# ---------------------------------------------------------------------
def gamma_term(rho_t, rho_next, year, t0, t1):
    """Stabilisation driver; zero whenever year <= t0 + t1 or rho_t == 0."""
    rho_t = np.asarray(rho_t, dtype=float)
    elapsed = np.maximum(np.asarray(year, dtype=float) - (np.asarray(t0) + np.asarray(t1)), 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        gamma = np.where(rho_t > 0, (np.asarray(rho_next) - rho_t) * elapsed / np.where(rho_t > 0, rho_t, 1.0), 0.0)
    return gamma if gamma.ndim else float(gamma)


def rtrend_rates(r_t, rho_t, gamma_t, beta0, beta1, beta2, beta3) -> np.ndarray:
    """r(t+1) elementwise; overflowed entries come back as inf or 0."""
    with np.errstate(over="ignore", invalid="ignore"):
        return np.asarray(r_t, dtype=float) * np.exp(beta1 * (beta0 - r_t) - beta2 * rho_t + beta3 * gamma_t)


def rtrend_step(r_t: float, rho_t: float, gamma_t: float, params: ParamVector) -> float:
    """r(t+1) from r(t), rho(t) and gamma(t)."""
    if not r_t > 0:
        raise ValueError(f"r_t must be positive, got {r_t}")
    if not 0.0 <= rho_t <= 1.0:
        raise ValueError(f"rho_t must lie in [0, 1], got {rho_t}")
    r_next = float(rtrend_rates(r_t, rho_t, gamma_t, params.beta0, params.beta1, params.beta2, params.beta3))
    if not math.isfinite(r_next) or r_next <= 0:
        logger.error("Non-finite infection rate from r=%s rho=%s gamma=%s", r_t, rho_t, gamma_t)
        raise NumericalOverflowError("r-trend update is not finite", theta=params.as_array())
    return r_next


# ---------------------------------------------------------------------
# Trajectories
# ---------------------------------------------------------------------
@dataclass(frozen=True)
class Trajectory:
    """Yearly model outputs for one parameter draw."""

    years: np.ndarray
    Z: np.ndarray
    Y: np.ndarray
    N: np.ndarray
    rho: np.ndarray
    r: np.ndarray
    incidence: np.ndarray
    hiv_deaths: np.ndarray
    clamped: bool = False
    overflow: bool = False

    @property
    def admissible(self) -> bool:
        return not (self.clamped or self.overflow)

    def index(self, year: int) -> int:
        i = int(year) - int(self.years[0])
        if not 0 <= i < len(self.years):
            raise IndexError(f"year {year} outside trajectory {self.years[0]}-{self.years[-1]}")
        return i

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"year": self.years, **{col: getattr(self, col) for col in TRAJECTORY_COLUMNS[1:]}})

    def to_csv(self) -> str:
        return self.to_frame().to_csv(index=False)


@dataclass(frozen=True)
class TrajectoryBatch:
    """Yearly outputs for a block of draws; arrays are (n_draws, n_years)."""

    years: np.ndarray
    Z: np.ndarray
    Y: np.ndarray
    r: np.ndarray
    clamped: np.ndarray
    overflow: np.ndarray
    hiv_death_rate: float

    @property
    def N(self) -> np.ndarray:
        return self.Z + self.Y

    @property
    def rho(self) -> np.ndarray:
        N = self.N
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(N > 0, self.Y / np.where(N > 0, N, 1.0), 0.0)

    @property
    def incidence(self) -> np.ndarray:
        N = self.N
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(N > 0, self.r * self.Y * self.Z / np.where(N > 0, N, 1.0), 0.0)

    @property
    def hiv_deaths(self) -> np.ndarray:
        return self.hiv_death_rate * self.Y

    @property
    def admissible(self) -> np.ndarray:
        return ~(self.clamped | self.overflow)

    def __len__(self) -> int:
        return self.Z.shape[0]

    def output(self, name: str) -> np.ndarray:
        if name == "prevalence":
            name = "rho"
        if name not in ("Z", "Y", "N", "rho", "r", "incidence", "hiv_deaths"):
            raise ValueError(f"unknown trajectory output {name!r}")
        return getattr(self, name)

    def __getitem__(self, i: int) -> Trajectory:
        return Trajectory(
            years=self.years,
            Z=self.Z[i],
            Y=self.Y[i],
            N=self.N[i],
            rho=self.rho[i],
            r=self.r[i],
            incidence=self.incidence[i],
            hiv_deaths=self.hiv_deaths[i],
            clamped=bool(self.clamped[i]),
            overflow=bool(self.overflow[i]),
        )


# ---------------------------------------------------------------------
# Integration
# ---------------------------------------------------------------------
def _rhs(Z, Y, r, E, mu, a50, M, alpha):
    N = Z + Y
    inv_N = np.where(N > 0, 1.0 / np.where(N > 0, N, 1.0), 0.0)
    infections = r * Y * Z * inv_N
    dZ = E - infections - mu * Z - a50 * Z * inv_N + M * Z * inv_N
    dY = infections - alpha * Y - a50 * Y * inv_N + M * Y * inv_N
    return dZ, dY


def _step(Z, Y, r, E, mu, a50, M, alpha, h, integrator):
    if integrator == "euler":
        dZ, dY = _rhs(Z, Y, r, E, mu, a50, M, alpha)
        return Z + h * dZ, Y + h * dY
    k1z, k1y = _rhs(Z, Y, r, E, mu, a50, M, alpha)
    k2z, k2y = _rhs(Z + 0.5 * h * k1z, Y + 0.5 * h * k1y, r, E, mu, a50, M, alpha)
    k3z, k3y = _rhs(Z + 0.5 * h * k2z, Y + 0.5 * h * k2y, r, E, mu, a50, M, alpha)
    k4z, k4y = _rhs(Z + h * k3z, Y + h * k3y, r, E, mu, a50, M, alpha)
    return (
        Z + h / 6.0 * (k1z + 2 * k2z + 2 * k3z + k4z),
        Y + h / 6.0 * (k1y + 2 * k2y + 2 * k3y + k4y),
    )


def project_batch(
    thetas: np.ndarray,
    demog: Demography,
    year_range: Optional[Tuple[int, int]] = None,
    cfg: Optional[DynamicsConfig] = None,
) -> TrajectoryBatch:
    """Integrate the model for every row of `thetas` (PARAM_NAMES order)."""
    cfg = cfg or DynamicsConfig()
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    t_start, t_end = year_range or (demog.year_start, demog.year_end)
    table = demog.table(t_start, t_end)

    n, n_years = thetas.shape[0], t_end - t_start + 1
    t0, t1, log_r0, beta0, beta1, beta2, beta3 = (thetas[:, j] for j in range(7))
    h, alpha = cfg.dt, cfg.hiv_death_rate

    Z = np.full(n, float(demog.initial_population))
    Y = np.zeros(n)
    with np.errstate(over="ignore"):
        r = np.exp(log_r0)
    overflow = ~np.isfinite(r)
    r = np.where(overflow, 1.0, r)
    seeded = np.zeros(n, dtype=bool)
    clamped = np.zeros(n, dtype=bool)

    Z_out = np.empty((n, n_years))
    Y_out = np.empty((n, n_years))
    r_out = np.empty((n, n_years))

    for k in range(n_years):
        year = t_start + k
        Z_out[:, k], Y_out[:, k], r_out[:, k] = Z, Y, r
        if k == n_years - 1:
            break

        E, mu, a50, M = (table[col][k] for col in ("entrants", "mu", "a50", "migration"))
        for s in range(cfg.steps_per_year):
            time = year + s * h
            new_seed = ~seeded & (time >= t0)
            if new_seed.any():
                moved = cfg.seed_fraction * (Z[new_seed] + Y[new_seed])
                Z[new_seed] -= moved
                Y[new_seed] += moved
                seeded |= new_seed
            with np.errstate(over="ignore", invalid="ignore"):
                Z, Y = _step(Z, Y, r, E, mu, a50, M, alpha, h, cfg.integrator)
            bad = ~(np.isfinite(Z) & np.isfinite(Y)) | (Z < 0) | (Y < 0)
            if bad.any():
                clamped |= bad
                Z = np.where(np.isfinite(Z), np.maximum(Z, 0.0), 0.0)
                Y = np.where(np.isfinite(Y), np.maximum(Y, 0.0), 0.0)

        # yearly r-trend update, only for draws already infected at the start of the year
        N_now = Z_out[:, k] + Y_out[:, k]
        N_next = Z + Y
        rho_now = np.where(N_now > 0, Y_out[:, k] / np.where(N_now > 0, N_now, 1.0), 0.0)
        rho_next = np.where(N_next > 0, Y / np.where(N_next > 0, N_next, 1.0), 0.0)
        active = rho_now > 0
        if active.any():
            gamma = gamma_term(rho_now, rho_next, year, t0, t1)
            r_next = rtrend_rates(r, rho_now, gamma, beta0, beta1, beta2, beta3)
            bad_r = active & ~(np.isfinite(r_next) & (r_next > 0))
            overflow |= bad_r
            r = np.where(active & ~bad_r, r_next, r)

    if clamped.any() or overflow.any():
        logger.debug(
            "Projection %d-%d: %d of %d draws clamped, %d overflowed",
            t_start, t_end, int(clamped.sum()), n, int(overflow.sum()),
        )
    return TrajectoryBatch(
        years=np.arange(t_start, t_end + 1),
        Z=Z_out,
        Y=Y_out,
        r=r_out,
        clamped=clamped,
        overflow=overflow,
        hiv_death_rate=alpha,
    )


def project(
    params: ParamVector,
    demog: Demography,
    year_range: Optional[Tuple[int, int]] = None,
    cfg: Optional[DynamicsConfig] = None,
) -> Trajectory:
    """Yearly trajectory for one parameter vector."""
    trajectory = project_batch(params.as_array()[None, :], demog, year_range, cfg)[0]
    if trajectory.overflow:
        logger.error("Infection rate overflow for %s", params)
        raise NumericalOverflowError("r-trend recursion overflowed", theta=params.as_array())
    return trajectory
