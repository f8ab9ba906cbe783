# stores/ensemble_store.py
"""
Ensemble persistence and tidy result files.

An ensemble is a CSV with the parameter columns followed by
`log_weight,loglik,sampler_logdensity`, plus a sidecar
`<name>.diagnostics.json`. Pooling reads these files back.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Optional, Union

import numpy as np
import pandas as pd
from scipy.special import logsumexp

from logging_config import configure_logger
from modules.data_model import PARAM_NAMES
from modules.errors import DataParseError, DataValidationError
from modules.pooling import JointEnsemble
from modules.sampler import ImisDiagnostics, WeightedEnsemble
from modules.utils import atomic_write_text, normalize_log_weights

logger = configure_logger("ensemble_store")

ENSEMBLE_COLUMNS = list(PARAM_NAMES) + ["log_weight", "loglik", "sampler_logdensity"]


def diagnostics_path(path: Union[str, Path]) -> Path:
    path = Path(path)
    return path.with_name(f"{path.stem}.diagnostics.json")


def save_frame(frame: pd.DataFrame, path: Union[str, Path]) -> Path:
    return atomic_write_text(path, frame.to_csv(index=False))


# ---------------------------------------------------------------------
# Weighted ensembles
# ---------------------------------------------------------------------
def ensemble_frame(ens: WeightedEnsemble) -> pd.DataFrame:
    frame = pd.DataFrame(ens.thetas, columns=list(PARAM_NAMES))
    frame["log_weight"] = ens.log_weights
    frame["loglik"] = ens.loglik
    frame["sampler_logdensity"] = ens.sampler_logdensity
    return frame


def save_ensemble(ens: WeightedEnsemble, path: Union[str, Path]) -> Path:
    path = Path(path)
    save_frame(ensemble_frame(ens), path)
    diagnostics = {"area": ens.area_id, **(ens.diagnostics.to_dict() if ens.diagnostics else {})}
    atomic_write_text(diagnostics_path(path), json.dumps(diagnostics, indent=2) + "\n")
    logger.info("Saved ensemble for %s (%d samples) to %s", ens.area_id, len(ens), path)
    return path


def load_ensemble(path: Union[str, Path], area_id: Optional[str] = None) -> WeightedEnsemble:
    """Read an ensemble CSV (and its diagnostics, when present)."""
    path = Path(path)
    if not path.is_file():
        logger.error("Ensemble file not found: %s", path)
        raise FileNotFoundError(f"ensemble file not found: {path}")
    try:
        frame = pd.read_csv(path, float_precision="round_trip")
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        logger.error("Cannot parse ensemble %s: %s", path, e)
        raise DataParseError(str(e), source=str(path)) from e
    if list(frame.columns) != ENSEMBLE_COLUMNS:
        raise DataParseError(f"expected header {','.join(ENSEMBLE_COLUMNS)}", line=1, source=str(path))
    if frame.empty:
        raise DataValidationError(f"{path}: ensemble has no samples")

    diagnostics = None
    diag_path = diagnostics_path(path)
    if diag_path.is_file():
        data = json.loads(diag_path.read_text(encoding="utf-8"))
        area_id = area_id or data.get("area")
        if "iterations" in data:
            diagnostics = ImisDiagnostics.from_dict(data)

    values = frame.to_numpy(dtype=float)
    log_weights = frame["log_weight"].to_numpy(dtype=float)
    # hand-edited files may not be normalised; saved ones load bit-exact
    if abs(logsumexp(log_weights)) > 1e-12:
        log_weights = normalize_log_weights(log_weights)
    return WeightedEnsemble(
        thetas=values[:, : len(PARAM_NAMES)],
        log_weights=log_weights,
        loglik=frame["loglik"].to_numpy(dtype=float),
        sampler_logdensity=frame["sampler_logdensity"].to_numpy(dtype=float),
        diagnostics=diagnostics,
        area_id=area_id or path.stem,
    )


# ---------------------------------------------------------------------
# Joint draws
# ---------------------------------------------------------------------
def joint_draws_frame(joint: JointEnsemble, rows: np.ndarray) -> pd.DataFrame:
    """One line per resampled tuple and area: draw, area, then the parameters."""
    frames = []
    for k, area_id in enumerate(joint.area_ids):
        frame = pd.DataFrame(joint.area_thetas(k, rows), columns=list(PARAM_NAMES))
        frame.insert(0, "area", area_id)
        frame.insert(0, "draw", np.arange(len(rows)))
        frames.append(frame)
    return pd.concat(frames, ignore_index=True).sort_values("draw", kind="stable", ignore_index=True)


def save_joint_draws(joint: JointEnsemble, rows: np.ndarray, path: Union[str, Path]) -> Path:
    path = save_frame(joint_draws_frame(joint, rows), path)
    logger.info("Saved %d joint draws for %d areas to %s", len(rows), joint.n_areas, path)
    return path
