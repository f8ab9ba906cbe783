# modules/utils.py
"""Weight arithmetic, summaries and small helpers shared across modules."""
from __future__ import annotations

import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Sequence, Union

import numpy as np
import pandas as pd
from scipy.special import logsumexp

from logging_config import configure_logger

logger = configure_logger("utils")

QUANTILES = (0.05, 0.5, 0.95)
QUANTILE_COLUMNS = ["area", "year", "q05", "q50", "q95"]


# ---------------------------------------------------------------------
# Importance weights
# ---------------------------------------------------------------------
def normalize_log_weights(log_weights: np.ndarray) -> np.ndarray:
    """Shift so that logsumexp == 0. All -inf input is returned unchanged."""
    log_weights = np.asarray(log_weights, dtype=float)
    total = logsumexp(log_weights)
    if not np.isfinite(total):
        return log_weights
    return log_weights - total


def effective_sample_size(log_weights: np.ndarray) -> float:
    """(sum w)^2 / sum w^2 from (possibly unnormalised) log weights."""
    log_weights = np.asarray(log_weights, dtype=float)
    return float(np.exp(2.0 * logsumexp(log_weights) - logsumexp(2.0 * log_weights)))


def child_seed(seed: int, *keys: int) -> int:
    """Independent, reproducible sub-seed for one job derived from the run seed."""
    return int(np.random.SeedSequence([seed, *keys]).generate_state(1)[0])


def expected_unique_fraction(weights: np.ndarray, n: int) -> float:
    """Expected share of distinct points in a multinomial resample of size n."""
    weights = np.asarray(weights, dtype=float)
    return float(np.sum(1.0 - (1.0 - weights) ** n) / n)


# ---------------------------------------------------------------------
# Summaries
# ---------------------------------------------------------------------
def quantile_frame(area_id: str, years: np.ndarray, draws: np.ndarray) -> pd.DataFrame:
    """Pointwise 5/50/95 percentiles of (n_draws, n_years) curves as a tidy frame."""
    q05, q50, q95 = np.quantile(draws, QUANTILES, axis=0)
    return pd.DataFrame(
        {"area": area_id, "year": np.asarray(years, dtype=int), "q05": q05, "q50": q50, "q95": q95},
        columns=QUANTILE_COLUMNS,
    )


def weighted_correlation(values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Weighted Pearson correlation of the columns of `values` (n, K).

    Columns with zero weighted variance give NaN rows and columns.
    """
    values = np.asarray(values, dtype=float)
    w = np.asarray(weights, dtype=float)
    w = w / w.sum()
    centred = values - w @ values
    cov = (centred * w[:, None]).T @ centred
    sd = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    scale = np.where(sd > 0, sd, np.nan)
    corr = cov / np.outer(scale, scale)
    corr = np.clip(corr, -1.0, 1.0)
    np.fill_diagonal(corr, np.where(sd > 0, 1.0, np.nan))
    return corr


# ---------------------------------------------------------------------
# Batched evaluation
# ---------------------------------------------------------------------
def evaluate_in_chunks(
    fn: Callable[[np.ndarray], np.ndarray],
    x: np.ndarray,
    threads: int = 1,
    chunk_size: int = 2000,
) -> np.ndarray:
    """Apply a row-wise batched function over chunks of `x`, optionally on a thread pool.

    Output order always matches input order.
    """
    if x.shape[0] == 0:
        return np.empty(0)
    chunks: Sequence[np.ndarray] = [x[i:i + chunk_size] for i in range(0, x.shape[0], chunk_size)]
    if threads <= 1 or len(chunks) == 1:
        return np.concatenate([fn(c) for c in chunks])
    with ThreadPoolExecutor(max_workers=threads) as executor:
        return np.concatenate(list(executor.map(fn, chunks)))


# ---------------------------------------------------------------------
# Files
# ---------------------------------------------------------------------
def atomic_write_text(path: Union[str, Path], text: str) -> Path:
    """Write through a temp file in the target directory, then rename over `path`."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise
    logger.debug("Wrote %s", path)
    return path
