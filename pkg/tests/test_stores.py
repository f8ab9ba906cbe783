# tests/test_stores.py

import json

import numpy as np
import pandas as pd
import pytest

from modules.data_model import PARAM_NAMES
from modules.errors import DataParseError, DataValidationError
from modules.pooling import PoolingConfig, combine, reweight
from modules.priors import IndependentPrior
from modules.sampler import ImisDiagnostics, WeightedEnsemble
from stores.area_store import KINDS, load_area, save_area
from stores.ensemble_store import (
    ENSEMBLE_COLUMNS,
    diagnostics_path,
    joint_draws_frame,
    load_ensemble,
    save_ensemble,
)


def area_paths(tmp_path, area_id="test"):
    return {kind: tmp_path / f"{area_id}_{kind}.csv" for kind in KINDS}


def sample_ensemble(n=40, seed=0, area_id="a"):
    rng = np.random.default_rng(seed)
    thetas = IndependentPrior().sample(n, rng)
    raw = rng.normal(size=n)
    log_w = raw - np.logaddexp.reduce(raw)
    diag = ImisDiagnostics(iterations=2, max_weight=float(np.exp(log_w).max()), ess=12.0,
                           expected_unique=0.5, n_evaluations=n)
    return WeightedEnsemble(thetas=thetas, log_weights=log_w, loglik=rng.normal(size=n),
                            sampler_logdensity=rng.normal(size=n), diagnostics=diag, area_id=area_id)


# ---------------------------------------------------------------------
# Area files
# ---------------------------------------------------------------------
def test_area_round_trip(tmp_path, small_dataset):
    paths = area_paths(tmp_path)
    save_area(small_dataset, paths)
    loaded = load_area(paths, "test", initial_population=small_dataset.demography.initial_population)
    assert loaded.anc == small_dataset.anc
    assert loaded.npbs == small_dataset.npbs
    assert loaded.demography == small_dataset.demography


def test_missing_area_file(tmp_path, small_dataset):
    paths = area_paths(tmp_path)
    save_area(small_dataset, paths)
    paths["npbs"].unlink()
    with pytest.raises(FileNotFoundError, match="test_npbs.csv"):
        load_area(paths, "test")


def test_parse_error_names_file_and_line(tmp_path, small_dataset):
    paths = area_paths(tmp_path)
    save_area(small_dataset, paths)
    paths["anc"].write_text("site,year,prevalence,n\nsiteA,1998,0.1,300\nsiteA,1999,oops,300\n", encoding="utf-8")
    with pytest.raises(DataParseError) as info:
        load_area(paths, "test")
    assert info.value.line == 3
    assert str(paths["anc"]) in str(info.value)


def test_validation_error_names_area(tmp_path, small_dataset):
    paths = area_paths(tmp_path)
    save_area(small_dataset, paths)
    paths["npbs"].write_text("year,prevalence,se\n2000,0.06,-1\n", encoding="utf-8")
    with pytest.raises(DataValidationError, match="area test"):
        load_area(paths, "test")


# ---------------------------------------------------------------------
# Ensembles
# ---------------------------------------------------------------------
def test_ensemble_round_trip(tmp_path):
    ens = sample_ensemble()
    path = save_ensemble(ens, tmp_path / "ensembles" / "a.csv")
    assert diagnostics_path(path).name == "a.diagnostics.json"
    assert json.loads(diagnostics_path(path).read_text())["area"] == "a"

    loaded = load_ensemble(path)
    assert loaded.area_id == "a"
    assert loaded.diagnostics == ens.diagnostics
    np.testing.assert_allclose(loaded.thetas, ens.thetas, rtol=1e-14)
    np.testing.assert_allclose(loaded.weights, ens.weights, rtol=1e-12)
    np.testing.assert_allclose(loaded.loglik, ens.loglik, rtol=1e-14)


def test_ensemble_round_trip_is_exact(tmp_path):
    """Pooling resamples the saved vectors, so reloading must not move a single bit"""
    ens = sample_ensemble(n=2000, seed=9)
    loaded = load_ensemble(save_ensemble(ens, tmp_path / "big.csv"))
    np.testing.assert_array_equal(loaded.thetas, ens.thetas)
    np.testing.assert_array_equal(loaded.log_weights, ens.log_weights)
    np.testing.assert_array_equal(loaded.loglik, ens.loglik)
    np.testing.assert_array_equal(loaded.sampler_logdensity, ens.sampler_logdensity)


def test_unnormalised_weights_are_renormalised(tmp_path):
    path = save_ensemble(sample_ensemble(n=5), tmp_path / "a.csv")
    frame = pd.read_csv(path)
    frame["log_weight"] = 0.0
    frame.to_csv(path, index=False)
    np.testing.assert_allclose(load_ensemble(path).weights, np.full(5, 0.2))


def test_ensemble_without_diagnostics_uses_file_stem(tmp_path):
    path = save_ensemble(sample_ensemble(), tmp_path / "north.csv")
    diagnostics_path(path).unlink()
    loaded = load_ensemble(path)
    assert loaded.area_id == "north"
    assert loaded.diagnostics is None


def test_ensemble_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_ensemble(tmp_path / "missing.csv")
    bad = tmp_path / "bad.csv"
    bad.write_text("t0,t1\n1980,20\n", encoding="utf-8")
    with pytest.raises(DataParseError):
        load_ensemble(bad)
    empty = tmp_path / "empty.csv"
    empty.write_text(",".join(ENSEMBLE_COLUMNS) + "\n", encoding="utf-8")
    with pytest.raises(DataValidationError):
        load_ensemble(empty)


def test_joint_draws_frame_layout():
    ensembles = [sample_ensemble(seed=1, area_id="a"), sample_ensemble(seed=2, area_id="b")]
    cfg = PoolingConfig(n_candidates=100, n_draws=5, min_ess=1)
    joint = reweight(combine(ensembles, 100, seed=3), ensembles, IndependentPrior(), None, cfg)
    rows = joint.resample_rows(5, seed=4)
    frame = joint_draws_frame(joint, rows)
    assert list(frame.columns) == ["draw", "area", *PARAM_NAMES]
    assert list(frame["draw"]) == [0, 0, 1, 1, 2, 2, 3, 3, 4, 4]
    assert list(frame["area"]) == ["a", "b"] * 5
    np.testing.assert_array_equal(frame[frame["area"] == "b"][list(PARAM_NAMES)].to_numpy(), joint.area_thetas(1, rows))
