#!/usr/bin/env python3
"""
Command-line front end.

    python main.py simulate --config config/run_config.json
    python main.py fit      --config config/run_config.json [--seed N] [--threads N]
    python main.py pool     --config config/run_config.json [--lambda l1,...,l8]
    python main.py evaluate --config config/run_config.json

Exit codes: 0 success, 2 bad input (missing file, malformed CSV/JSON, invalid
values), 1 any other estimation failure.
"""
import argparse
import sys
from pathlib import Path
from typing import Dict, List, Optional

import pandas as pd
from pydantic import ValidationError
from tqdm import tqdm

from config import config
from logging_config import configure_logger, redirect_logs
from modules.data_model import PARAM_NAMES, AreaDataset, constant_demography, parse_demography_csv
from modules.errors import (
    DataParseError,
    DataValidationError,
    NoAdmissibleDrawsError,
    NumericalOverflowError,
    PoolingError,
    TruncationError,
)
from modules.evaluation import scenario_table, simulate_dataset
from modules.pooling import (
    combine,
    correlation_frame,
    ensemble_trajectories,
    pooled_trajectories,
    reweight,
    trajectory_quantiles,
)
from modules.run_config import AreaSpec, RunConfig, load_run_config, parse_lambda
from modules.sampler import imis_fit
from modules.utils import child_seed
from stores.area_store import KINDS, load_area, save_area
from stores.ensemble_store import load_ensemble, save_ensemble, save_frame, save_joint_draws

logger = configure_logger("main")

TRAJECTORY_OUTPUTS = ("prevalence", "incidence")


# ---------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------
def _area_paths(run: RunConfig, area: AreaSpec) -> Dict[str, Path]:
    return {kind: run.area_path(area, kind) for kind in KINDS}


def _load_datasets(run: RunConfig, areas: Optional[List[AreaSpec]] = None) -> Dict[str, AreaDataset]:
    return {
        area.area_id: load_area(_area_paths(run, area), area.area_id, area.initial_population, area.country)
        for area in (areas or run.areas)
    }


def _save_quantiles(batches, stem: str, out_dir: Path) -> None:
    for output in TRAJECTORY_OUTPUTS:
        save_frame(trajectory_quantiles(batches, output), out_dir / f"{stem}_{output}.csv")


def _country_label(country: str) -> str:
    return country or "all"


# ---------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------
def cmd_simulate(run: RunConfig) -> int:
    """Write synthetic ANC/NPBS/demography CSVs for every configured area."""
    sim = run.simulation
    if sim is None:
        raise DataValidationError("run config has no 'simulation' section")
    truths = []
    for k, area in enumerate(run.areas):
        paths = _area_paths(run, area)
        if area.demography is not None and paths["demography"].is_file():
            demog = parse_demography_csv(paths["demography"].read_text(encoding="utf-8"), area.initial_population)
        else:
            demog = constant_demography(sim.year_start, sim.year_end, population=area.initial_population)
        truth = run.truth_for(area)
        ds = simulate_dataset(
            truth, demog, sim.site_count, sim.years, child_seed(run.seed, 0, k), sim,
            area_id=area.area_id, country=area.country, dynamics=run.dynamics,
        )
        save_area(ds, paths)
        truths.append({"area": area.area_id, **dict(zip(PARAM_NAMES, truth.as_array()))})
    save_frame(pd.DataFrame(truths), run.output_dir / "data" / "truth.csv")
    logger.info("Simulated %d areas into %s", len(run.areas), run.output_dir / "data")
    return 0


def cmd_fit(run: RunConfig) -> int:
    """Independent IMIS fit per area: ensemble CSV, diagnostics JSON, trajectory quantiles."""
    datasets = _load_datasets(run)
    prior = run.hierarchy.independent_prior()
    for k, area in enumerate(tqdm(run.areas, desc="fit", disable=None)):
        ds = datasets[area.area_id]
        imis_cfg = run.imis.model_copy(update={"rng_seed": child_seed(run.seed, 1, k), "threads": run.threads})
        ens = imis_fit(ds, prior, imis_cfg, run.likelihood, run.dynamics)
        save_ensemble(ens, run.ensemble_path(area.area_id))
        batch = ensemble_trajectories(ens, ds, run.n_trajectory_draws, child_seed(run.seed, 2, k), run.dynamics)
        _save_quantiles({area.area_id: batch}, f"{area.area_id}_independent", run.output_dir / "trajectories")
    return 0


def cmd_pool(run: RunConfig) -> int:
    """Hierarchical reweighting of the fitted ensembles, one country at a time."""
    prior = run.hierarchy.independent_prior()
    hier = run.hierarchy.hier_prior()
    out_dir = run.output_dir / "pooled"
    for c, (country, areas) in enumerate(run.countries().items()):
        label = _country_label(country)
        datasets = _load_datasets(run, areas)
        ensembles = [load_ensemble(run.ensemble_path(a.area_id), a.area_id) for a in areas]
        tuples = combine(ensembles, run.pooling.n_candidates, child_seed(run.seed, 3, c))
        joint = reweight(tuples, ensembles, prior, hier, run.pooling)

        draw_seed = child_seed(run.seed, 4, c)
        save_joint_draws(joint, joint.resample_rows(run.pooling.n_draws, draw_seed), out_dir / f"{label}_joint_draws.csv")
        batches = pooled_trajectories(joint, datasets, run.pooling.n_draws, draw_seed, run.dynamics)
        for area_id, batch in batches.items():
            _save_quantiles({area_id: batch}, f"{area_id}_hierarchical", out_dir)
        if run.pooling.correlation_years:
            frame = correlation_frame(
                joint, datasets, run.pooling.correlation_outputs, run.pooling.correlation_years, run.dynamics
            )
            save_frame(frame, out_dir / f"{label}_correlations.csv")
        logger.info("Pooled country %s: %d areas, ESS %.1f", label, joint.n_areas, joint.ess)
    return 0


def cmd_evaluate(run: RunConfig) -> int:
    """Truncation scenarios for every country with at least two areas."""
    prior = run.hierarchy.independent_prior()
    hier = run.hierarchy.hier_prior()
    imis_cfg = run.imis.model_copy(update={"threads": run.threads})
    reports = []
    for c, (country, areas) in enumerate(run.countries().items()):
        if len(areas) < 2:
            logger.warning("Skipping country %s: needs at least two areas", _country_label(country))
            continue
        datasets = _load_datasets(run, areas)
        report = scenario_table(
            list(datasets.values()), child_seed(run.seed, 5, c), prior, hier, imis_cfg,
            run.pooling, run.likelihood, run.dynamics, run.imis.n_resample,
        )
        report.insert(0, "country", _country_label(country))
        reports.append(report)
    if not reports:
        raise DataValidationError("no country has at least two areas to evaluate")
    save_frame(pd.concat(reports, ignore_index=True), run.output_dir / "evaluation" / "report.csv")
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "pool": cmd_pool,
    "evaluate": cmd_evaluate,
}


# ---------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(description="HIV epidemic estimation with hierarchical pooling")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="Path to the JSON run config")
    p.add_argument("--seed", type=int, help="Override the run seed")
    p.add_argument("--out-dir", help="Override the output directory")
    p.add_argument("--lambda", dest="lam", help=f"Comma list of {len(PARAM_NAMES)} ratios ({','.join(PARAM_NAMES)})")
    p.add_argument("--threads", type=int, help=f"Worker threads (default {config.THREADS})")
    return p


def apply_overrides(run: RunConfig, args: argparse.Namespace) -> RunConfig:
    update = {}
    if args.seed is not None:
        update["seed"] = args.seed
    if args.out_dir is not None:
        update["out_dir"] = Path(args.out_dir).resolve()
    if args.threads is not None:
        if args.threads < 1:
            raise DataValidationError("--threads must be at least 1")
        update["threads"] = args.threads
    if args.lam is not None:
        update["hierarchy"] = run.hierarchy.model_copy(update={"lam": parse_lambda(args.lam)})
    return run.model_copy(update=update)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        run = apply_overrides(load_run_config(Path(args.config)), args)
        redirect_logs(run.output_dir / "logs")
        logger.info("Running %s with seed %d", args.command, run.seed)
        return COMMANDS[args.command](run)
    except (FileNotFoundError, DataParseError, DataValidationError, ValidationError) as e:
        logger.error("%s failed: %s", args.command, e)
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (NoAdmissibleDrawsError, PoolingError, TruncationError, NumericalOverflowError) as e:
        logger.error("%s failed: %s", args.command, e)
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:
        logger.exception("%s failed unexpectedly", args.command)
        print(f"error: unexpected failure in {args.command}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
