# modules/data_model.py
"""
Domain types and CSV ingestion for one geographic area.

An area is described by
* ANC sentinel-site prevalence series (`site,year,prevalence,n`)
* national population-based survey points (`year,prevalence,se`)
* per-year demography tables (`year,entrants,mu,a50,migration`)

Prevalences of exactly 0 or 1 are kept verbatim; the likelihood applies the
continuity correction.
"""
from __future__ import annotations

import io
import math
import re
from dataclasses import dataclass, fields, replace
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from logging_config import configure_logger
from modules.errors import DataParseError, DataValidationError

logger = configure_logger("data_model")

# ---------------------------------------------------------------------
# Parameter vector
# ---------------------------------------------------------------------
PARAM_NAMES: Tuple[str, ...] = ("t0", "t1", "log_r0", "beta0", "beta1", "beta2", "beta3", "beta4")
N_PARAMS = len(PARAM_NAMES)

ANC_COLUMNS = ["site", "year", "prevalence", "n"]
NPBS_COLUMNS = ["year", "prevalence", "se"]
DEMOGRAPHY_COLUMNS = ["year", "entrants", "mu", "a50", "migration"]


@dataclass(frozen=True)
class ParamVector:
    """The eight r-trend inputs of one area, always in PARAM_NAMES order."""

    t0: float
    t1: float
    log_r0: float
    beta0: float
    beta1: float
    beta2: float
    beta3: float
    beta4: float

    def __post_init__(self):
        for f in fields(self):
            value = float(getattr(self, f.name))
            if not math.isfinite(value):
                raise DataValidationError(f"ParamVector.{f.name} must be finite, got {value}")
            object.__setattr__(self, f.name, value)

    @property
    def r0(self) -> float:
        return math.exp(self.log_r0)

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in PARAM_NAMES], dtype=float)

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "ParamVector":
        values = np.asarray(values, dtype=float).ravel()
        if values.size != N_PARAMS:
            raise DataValidationError(f"expected {N_PARAMS} parameters, got {values.size}")
        return cls(*values.tolist())

    def replace(self, **changes) -> "ParamVector":
        return replace(self, **changes)


# ---------------------------------------------------------------------
# Observations
# ---------------------------------------------------------------------
class AncObservation(BaseModel):
    """Prevalence among women tested at one antenatal clinic in one year."""

    model_config = ConfigDict(frozen=True)

    site_id: str = Field(min_length=1)
    year: int
    prevalence: float = Field(ge=0.0, le=1.0, allow_inf_nan=False)
    sample_size: int = Field(ge=1)


class NpbsObservation(BaseModel):
    """National population-based survey estimate with its standard error."""

    model_config = ConfigDict(frozen=True)

    year: int
    prevalence: float = Field(ge=0.0, le=1.0, allow_inf_nan=False)
    std_error: float = Field(gt=0.0, allow_inf_nan=False)


# ---------------------------------------------------------------------
# Demography
# ---------------------------------------------------------------------
class Demography(BaseModel):
    """Per-year external demography over [year_start, year_end]."""

    model_config = ConfigDict(frozen=True)

    year_start: int
    entrants: Tuple[float, ...]
    mu: Tuple[float, ...]
    a50: Tuple[float, ...]
    migration: Tuple[float, ...]
    initial_population: float = Field(gt=0.0, allow_inf_nan=False)

    @field_validator("entrants", "mu", "a50", "migration", mode="before")
    @classmethod
    def _as_tuple(cls, value):
        return tuple(float(x) for x in value)

    @model_validator(mode="after")
    def _check_tables(self) -> "Demography":
        lengths = {len(self.entrants), len(self.mu), len(self.a50), len(self.migration)}
        if len(lengths) != 1 or 0 in lengths:
            raise ValueError("demography tables must be non-empty and of equal length")
        for name in ("entrants", "mu", "a50", "migration"):
            if not all(math.isfinite(x) for x in getattr(self, name)):
                raise ValueError(f"demography column {name} contains non-finite values")
        if min(self.mu) < 0:
            raise ValueError("non-AIDS mortality mu(t) must be non-negative")
        return self

    @property
    def year_end(self) -> int:
        return self.year_start + len(self.entrants) - 1

    @property
    def years(self) -> np.ndarray:
        return np.arange(self.year_start, self.year_end + 1)

    def covers(self, year: int) -> bool:
        return self.year_start <= year <= self.year_end

    def table(self, year_start: int, year_end: int) -> Dict[str, np.ndarray]:
        """Columns restricted to [year_start, year_end] as numpy arrays."""
        if not (self.covers(year_start) and self.covers(year_end)) or year_end < year_start:
            raise DataValidationError(
                f"demography covers {self.year_start}-{self.year_end}, "
                f"requested {year_start}-{year_end}"
            )
        lo, hi = year_start - self.year_start, year_end - self.year_start + 1
        return {
            "entrants": np.asarray(self.entrants[lo:hi]),
            "mu": np.asarray(self.mu[lo:hi]),
            "a50": np.asarray(self.a50[lo:hi]),
            "migration": np.asarray(self.migration[lo:hi]),
        }


def constant_demography(
    year_start: int = 1970,
    year_end: int = 2015,
    population: float = 1_000_000.0,
    mu: float = 0.01,
    a50_fraction: float = 1.0 / 35.0,
    migration: float = 0.0,
) -> Demography:
    """Constant tables with entrants balancing deaths and ageing out (E = mu*N + a50)."""
    n_years = year_end - year_start + 1
    a50 = population * a50_fraction
    return Demography(
        year_start=year_start,
        entrants=[mu * population + a50] * n_years,
        mu=[mu] * n_years,
        a50=[a50] * n_years,
        migration=[migration] * n_years,
        initial_population=population,
    )


# ---------------------------------------------------------------------
# Area dataset
# ---------------------------------------------------------------------
class AreaDataset(BaseModel):
    """All surveillance data and demography for one area."""

    model_config = ConfigDict(frozen=True)

    area_id: str = Field(min_length=1)
    anc: Tuple[AncObservation, ...] = ()
    npbs: Tuple[NpbsObservation, ...] = ()
    demography: Demography
    country: Optional[str] = None

    @model_validator(mode="after")
    def _check_years(self) -> "AreaDataset":
        for obs in (*self.anc, *self.npbs):
            if not self.demography.covers(obs.year):
                raise ValueError(
                    f"observation year {obs.year} outside demography range "
                    f"{self.demography.year_start}-{self.demography.year_end}"
                )
        return self

    @property
    def is_empty(self) -> bool:
        return not self.anc and not self.npbs

    def anc_sites(self) -> Dict[str, List[AncObservation]]:
        """ANC series per site, sites in order of first appearance, years ascending."""
        sites: Dict[str, List[AncObservation]] = {}
        for obs in self.anc:
            sites.setdefault(obs.site_id, []).append(obs)
        return {site: sorted(series, key=lambda o: o.year) for site, series in sites.items()}

    @property
    def n_anc_sites(self) -> int:
        return len({obs.site_id for obs in self.anc})

    def with_observations(
        self,
        anc: Optional[Iterable[AncObservation]] = None,
        npbs: Optional[Iterable[NpbsObservation]] = None,
    ) -> "AreaDataset":
        update = {}
        if anc is not None:
            update["anc"] = tuple(anc)
        if npbs is not None:
            update["npbs"] = tuple(npbs)
        return self.model_copy(update=update)


def data_years(ds: AreaDataset) -> List[int]:
    """Sorted distinct years with at least one ANC or NPBS observation."""
    return sorted({obs.year for obs in ds.anc} | {obs.year for obs in ds.npbs})


# ---------------------------------------------------------------------
# CSV parsing
# ---------------------------------------------------------------------
_PANDAS_LINE = re.compile(r"line (\d+)")


def _read_table(text: str, columns: List[str], source: str) -> pd.DataFrame:
    """Read CSV text as strings; index i of the frame is file line i + 2."""
    if not text or not text.strip():
        return pd.DataFrame(columns=columns)
    try:
        frame = pd.read_csv(
            io.StringIO(text),
            dtype=str,
            keep_default_na=False,
            skip_blank_lines=False,
            skipinitialspace=True,
        )
    except pd.errors.ParserError as e:
        match = _PANDAS_LINE.search(str(e))
        line = int(match.group(1)) if match else None
        logger.error("Malformed %s CSV: %s", source, e)
        raise DataParseError("wrong number of fields", line=line, source=source) from e

    header = [c.strip() for c in frame.columns]
    if header != columns:
        logger.error("Unexpected %s header %s", source, header)
        raise DataParseError(f"expected header {','.join(columns)}, got {','.join(header)}", line=1, source=source)
    frame.columns = header
    return frame


def _rows(frame: pd.DataFrame, source: str):
    for idx, row in frame.iterrows():
        line = int(idx) + 2
        cells = row.tolist()
        if all(pd.isna(v) or str(v).strip() == "" for v in cells):
            continue
        if any(pd.isna(v) for v in cells):
            raise DataParseError("missing field", line=line, source=source)
        yield line, row


def _to_int(value: str, field: str, line: int, source: str) -> int:
    try:
        number = float(value)
    except (TypeError, ValueError):
        raise DataParseError(f"{field} is not a number: {value!r}", line=line, source=source) from None
    if not number.is_integer():
        raise DataParseError(f"{field} must be an integer: {value!r}", line=line, source=source)
    return int(number)


def _to_float(value: str, field: str, line: int, source: str) -> float:
    try:
        return float(value)
    except (TypeError, ValueError):
        raise DataParseError(f"{field} is not a number: {value!r}", line=line, source=source) from None


def _validated(model, line: int, source: str, **values):
    try:
        return model(**values)
    except ValidationError as e:
        detail = "; ".join(f"{'.'.join(map(str, err['loc']))}: {err['msg']}" for err in e.errors())
        logger.error("%s line %d failed validation: %s", source, line, detail)
        raise DataValidationError(f"{source} line {line}: {detail}") from e


def parse_anc_csv(text: str) -> List[AncObservation]:
    frame = _read_table(text, ANC_COLUMNS, "anc")
    observations = []
    for line, row in _rows(frame, "anc"):
        if str(row["site"]).strip() == "":
            raise DataParseError("site is empty", line=line, source="anc")
        observations.append(
            _validated(
                AncObservation,
                line,
                "anc",
                site_id=str(row["site"]).strip(),
                year=_to_int(row["year"], "year", line, "anc"),
                prevalence=_to_float(row["prevalence"], "prevalence", line, "anc"),
                sample_size=_to_int(row["n"], "n", line, "anc"),
            )
        )
    return observations


def parse_npbs_csv(text: str) -> List[NpbsObservation]:
    frame = _read_table(text, NPBS_COLUMNS, "npbs")
    observations = []
    for line, row in _rows(frame, "npbs"):
        observations.append(
            _validated(
                NpbsObservation,
                line,
                "npbs",
                year=_to_int(row["year"], "year", line, "npbs"),
                prevalence=_to_float(row["prevalence"], "prevalence", line, "npbs"),
                std_error=_to_float(row["se"], "se", line, "npbs"),
            )
        )
    return observations


def parse_demography_csv(text: str, initial_population: float) -> Demography:
    frame = _read_table(text, DEMOGRAPHY_COLUMNS, "demography")
    records = []
    for line, row in _rows(frame, "demography"):
        records.append(
            (
                _to_int(row["year"], "year", line, "demography"),
                *(_to_float(row[c], c, line, "demography") for c in DEMOGRAPHY_COLUMNS[1:]),
            )
        )
    if not records:
        raise DataValidationError("demography table is empty")
    records.sort(key=lambda r: r[0])
    years = [r[0] for r in records]
    if years != list(range(years[0], years[0] + len(years))):
        raise DataValidationError(f"demography years must be consecutive, got {years[0]}-{years[-1]} with gaps")
    try:
        return Demography(
            year_start=years[0],
            entrants=[r[1] for r in records],
            mu=[r[2] for r in records],
            a50=[r[3] for r in records],
            migration=[r[4] for r in records],
            initial_population=initial_population,
        )
    except ValidationError as e:
        logger.error("Demography failed validation: %s", e)
        raise DataValidationError(f"demography: {e.errors()[0]['msg']}") from e


def parse_area_dataset(
    anc_csv: str,
    npbs_csv: str,
    demog_csv: str,
    area_id: str,
    initial_population: float = 1_000_000.0,
    country: Optional[str] = None,
) -> AreaDataset:
    """Parse and validate the three CSV texts of one area."""
    anc = parse_anc_csv(anc_csv)
    npbs = parse_npbs_csv(npbs_csv)
    demography = parse_demography_csv(demog_csv, initial_population)
    if not anc and not npbs:
        logger.error("Area %s has no observations", area_id)
        raise DataValidationError(f"area {area_id}: dataset has no ANC or NPBS observations")
    try:
        ds = AreaDataset(area_id=area_id, anc=anc, npbs=npbs, demography=demography, country=country)
    except ValidationError as e:
        logger.error("Area %s failed validation: %s", area_id, e)
        raise DataValidationError(f"area {area_id}: {e.errors()[0]['msg']}") from e
    logger.info(
        "Parsed area %s: %d ANC obs at %d sites, %d NPBS obs",
        area_id, len(anc), ds.n_anc_sites, len(npbs),
    )
    return ds


# ---------------------------------------------------------------------
# CSV serialisation
# ---------------------------------------------------------------------
def anc_to_csv(observations: Iterable[AncObservation]) -> str:
    frame = pd.DataFrame(
        [(o.site_id, o.year, o.prevalence, o.sample_size) for o in observations],
        columns=ANC_COLUMNS,
    )
    return frame.to_csv(index=False)


def npbs_to_csv(observations: Iterable[NpbsObservation]) -> str:
    frame = pd.DataFrame(
        [(o.year, o.prevalence, o.std_error) for o in observations],
        columns=NPBS_COLUMNS,
    )
    return frame.to_csv(index=False)


def demography_to_csv(demography: Demography) -> str:
    frame = pd.DataFrame(
        {
            "year": demography.years,
            "entrants": demography.entrants,
            "mu": demography.mu,
            "a50": demography.a50,
            "migration": demography.migration,
        }
    )
    return frame.to_csv(index=False)
