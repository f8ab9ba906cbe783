# tests/test_cli.py

import json
from unittest.mock import patch

import pandas as pd
import pytest

from main import main

TINY_RUN = {
    "seed": 11,
    "out_dir": "out",
    "threads": 1,
    "n_trajectory_draws": 50,
    "areas": [
        {"area_id": "north", "country": "c1", "initial_population": 500000},
        {"area_id": "south", "country": "c1", "initial_population": 800000},
    ],
    "imis": {"n_initial": 300, "n_per_iter": 50, "max_iterations": 2, "n_resample": 100},
    "pooling": {"n_candidates": 2000, "n_draws": 50, "min_ess": 1, "correlation_years": [2000]},
    "simulation": {"site_count": 2, "years": [1998, 1999, 2000, 2001, 2002], "npbs_years": [2002]},
}


def write_config(tmp_path, **changes):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({**TINY_RUN, **changes}), encoding="utf-8")
    return path


@pytest.fixture
def fitted(tmp_path):
    cfg = write_config(tmp_path)
    assert main(["simulate", "--config", str(cfg)]) == 0
    assert main(["fit", "--config", str(cfg)]) == 0
    return cfg, tmp_path / "out"


# ---------------------------------------------------------------------
# Bad input
# ---------------------------------------------------------------------
def test_missing_config(tmp_path, capsys):
    assert main(["fit", "--config", str(tmp_path / "nope.json")]) == 2
    assert "run config not found" in capsys.readouterr().err


def test_invalid_json(tmp_path):
    path = tmp_path / "run.json"
    path.write_text("{\"seed\": 1,", encoding="utf-8")
    assert main(["fit", "--config", str(path)]) == 2


def test_invalid_config_values(tmp_path):
    cfg = write_config(tmp_path, dynamics={"dt": 0.3})
    assert main(["fit", "--config", str(cfg)]) == 2


def test_missing_data_files(tmp_path):
    assert main(["fit", "--config", str(write_config(tmp_path))]) == 2


def test_malformed_data_file(tmp_path):
    cfg = write_config(tmp_path)
    assert main(["simulate", "--config", str(cfg)]) == 0
    (tmp_path / "out" / "data" / "north_anc.csv").write_text("site,year,prevalence,n\nsite01,2000,0.1\n")
    assert main(["fit", "--config", str(cfg)]) == 2


def test_missing_ensemble(tmp_path):
    cfg = write_config(tmp_path)
    assert main(["simulate", "--config", str(cfg)]) == 0
    assert main(["pool", "--config", str(cfg)]) == 2


@pytest.mark.parametrize("lam", ["1,2,3", "1,1,1,1,1,1,1,-1", "a,b,c,d,e,f,g,h"])
def test_bad_lambda(tmp_path, lam):
    cfg = write_config(tmp_path)
    assert main(["pool", "--config", str(cfg), "--lambda", lam]) == 2


def test_unknown_command(tmp_path):
    with pytest.raises(SystemExit):
        main(["train", "--config", str(write_config(tmp_path))])


def test_unexpected_error_exits_with_one(tmp_path, capsys):
    def broken(run):
        raise RuntimeError("disk on fire")

    with patch.dict("main.COMMANDS", {"fit": broken}):
        assert main(["fit", "--config", str(write_config(tmp_path))]) == 1
    err = capsys.readouterr().err
    assert "unexpected failure in fit" in err
    assert "disk on fire" in err


# ---------------------------------------------------------------------
# Pipeline
# ---------------------------------------------------------------------
def test_simulate_writes_area_files(tmp_path):
    cfg = write_config(tmp_path)
    assert main(["simulate", "--config", str(cfg)]) == 0
    data = tmp_path / "out" / "data"
    for area in ("north", "south"):
        for kind in ("anc", "npbs", "demography"):
            assert (data / f"{area}_{kind}.csv").is_file()
    truth = pd.read_csv(data / "truth.csv")
    assert list(truth["area"]) == ["north", "south"]


def test_fit_and_pool_outputs(fitted):
    cfg, out = fitted
    for area in ("north", "south"):
        assert (out / "ensembles" / f"{area}.csv").is_file()
        assert (out / "ensembles" / f"{area}.diagnostics.json").is_file()
        assert (out / "trajectories" / f"{area}_independent_prevalence.csv").is_file()

    assert main(["pool", "--config", str(cfg)]) == 0
    pooled = out / "pooled"
    draws = pd.read_csv(pooled / "c1_joint_draws.csv")
    assert len(draws) == 2 * 50
    assert (pooled / "north_hierarchical_incidence.csv").is_file()
    corr = pd.read_csv(pooled / "c1_correlations.csv")
    assert set(corr["year"]) == {2000}


def test_same_seed_same_outputs(tmp_path):
    cfg = write_config(tmp_path)
    for out in ("run_a", "run_b"):
        for command in ("simulate", "fit", "pool"):
            assert main([command, "--config", str(cfg), "--out-dir", str(tmp_path / out)]) == 0
    for name in ("ensembles/north.csv", "pooled/c1_joint_draws.csv", "pooled/south_hierarchical_prevalence.csv"):
        assert (tmp_path / "run_a" / name).read_bytes() == (tmp_path / "run_b" / name).read_bytes()


def test_seed_override_changes_data(tmp_path):
    cfg = write_config(tmp_path)
    assert main(["simulate", "--config", str(cfg), "--out-dir", str(tmp_path / "a")]) == 0
    assert main(["simulate", "--config", str(cfg), "--out-dir", str(tmp_path / "b"), "--seed", "12"]) == 0
    name = "data/north_anc.csv"
    assert (tmp_path / "a" / name).read_bytes() != (tmp_path / "b" / name).read_bytes()


def test_lambda_override_changes_pooling(fitted):
    cfg, out = fitted
    assert main(["pool", "--config", str(cfg)]) == 0
    default = (out / "pooled" / "c1_joint_draws.csv").read_bytes()
    assert main(["pool", "--config", str(cfg), "--lambda", ",".join(["inf"] * 8)]) == 0
    assert (out / "pooled" / "c1_joint_draws.csv").read_bytes() != default


def test_evaluate_writes_report(tmp_path):
    cfg = write_config(tmp_path)
    assert main(["simulate", "--config", str(cfg)]) == 0
    assert main(["evaluate", "--config", str(cfg)]) == 0
    report = pd.read_csv(tmp_path / "out" / "evaluation" / "report.csv")
    assert list(report["country"]) == ["c1", "c1"]
    assert list(report["area"]) == ["north", "south"]
    assert "d_full_trunc" in report.columns


def test_evaluate_needs_two_areas(tmp_path):
    cfg = write_config(tmp_path, areas=[{"area_id": "solo"}])
    assert main(["simulate", "--config", str(cfg)]) == 0
    assert main(["evaluate", "--config", str(cfg)]) == 2


def test_single_area_pool_resamples_its_ensemble(tmp_path):
    cfg = write_config(tmp_path, areas=[{"area_id": "solo"}])
    for command in ("simulate", "fit", "pool"):
        assert main([command, "--config", str(cfg)]) == 0
    out = tmp_path / "out"
    assert [p.name for p in (out / "ensembles").glob("*.csv")] == ["solo.csv"]

    params = ["t0", "t1", "log_r0", "beta0", "beta1", "beta2", "beta3", "beta4"]
    ensemble = pd.read_csv(out / "ensembles" / "solo.csv")
    draws = pd.read_csv(out / "pooled" / "all_joint_draws.csv")
    assert set(draws["area"]) == {"solo"}
    source = set(map(tuple, ensemble[params].to_numpy()))
    assert all(tuple(row) in source for row in draws[params].to_numpy())
