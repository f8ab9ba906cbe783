# tests/conftest.py
import os
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from modules.data_model import AncObservation, AreaDataset, NpbsObservation, ParamVector, constant_demography  # noqa: E402
from modules.priors import IndependentPrior  # noqa: E402
from modules.sampler import ImisConfig  # noqa: E402


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long acceptance run, enabled with EPP_SLOW_TESTS=1")


def pytest_collection_modifyitems(config, items):
    if os.getenv("EPP_SLOW_TESTS") == "1":
        return
    skip = pytest.mark.skip(reason="set EPP_SLOW_TESTS=1 to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def prior_mean_params() -> ParamVector:
    return ParamVector.from_array(IndependentPrior().mean)


@pytest.fixture
def demography():
    return constant_demography(1970, 2015, population=1_000_000.0)


@pytest.fixture
def small_dataset(demography) -> AreaDataset:
    anc = [
        AncObservation(site_id="siteA", year=1998, prevalence=0.08, sample_size=300),
        AncObservation(site_id="siteA", year=1999, prevalence=0.10, sample_size=300),
        AncObservation(site_id="siteB", year=1998, prevalence=0.05, sample_size=250),
        AncObservation(site_id="siteB", year=2000, prevalence=0.07, sample_size=250),
    ]
    npbs = [NpbsObservation(year=2000, prevalence=0.06, std_error=0.004)]
    return AreaDataset(area_id="test", anc=tuple(anc), npbs=tuple(npbs), demography=demography)


@pytest.fixture
def small_imis() -> ImisConfig:
    return ImisConfig(n_initial=2000, n_per_iter=200, max_iterations=30, n_resample=1000, rng_seed=11, threads=1)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)
