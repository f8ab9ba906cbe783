# stores/area_store.py
"""Read and write one area's ANC / NPBS / demography CSV files."""
from __future__ import annotations

from pathlib import Path
from typing import Dict, Optional

from logging_config import configure_logger
from modules.data_model import (
    AreaDataset,
    anc_to_csv,
    demography_to_csv,
    npbs_to_csv,
    parse_area_dataset,
)
from modules.errors import DataParseError, DataValidationError
from modules.utils import atomic_write_text

logger = configure_logger("area_store")

KINDS = ("anc", "npbs", "demography")


def _read(path: Path) -> str:
    if not path.is_file():
        logger.error("Data file not found: %s", path)
        raise FileNotFoundError(f"data file not found: {path}")
    return path.read_text(encoding="utf-8")


def load_area(
    paths: Dict[str, Path],
    area_id: str,
    initial_population: float = 1_000_000.0,
    country: Optional[str] = None,
) -> AreaDataset:
    """Parse the three CSV files of one area; error messages name the offending file."""
    texts = {kind: _read(Path(paths[kind])) for kind in KINDS}
    try:
        return parse_area_dataset(
            texts["anc"], texts["npbs"], texts["demography"], area_id,
            initial_population=initial_population, country=country,
        )
    except DataParseError as e:
        path = paths.get(e.source, paths["anc"])
        raise DataParseError(e.detail, line=e.line, source=str(path)) from e
    except DataValidationError as e:
        raise DataValidationError(f"area {area_id} ({', '.join(str(paths[k]) for k in KINDS)}): {e}") from e


def save_area(ds: AreaDataset, paths: Dict[str, Path]) -> Dict[str, Path]:
    """Write the dataset as three CSV files at `paths` (keys anc, npbs, demography)."""
    atomic_write_text(paths["anc"], anc_to_csv(ds.anc))
    atomic_write_text(paths["npbs"], npbs_to_csv(ds.npbs))
    atomic_write_text(paths["demography"], demography_to_csv(ds.demography))
    logger.info("Saved area %s to %s", ds.area_id, Path(paths["anc"]).parent)
    return paths
