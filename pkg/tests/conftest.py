import numpy as np
import pytest

import sys
from pathlib import Path

from minprof.datasets import write_fixture

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


@pytest.fixture(scope="session")
def fixture_dir(tmp_path_factory):
    """Small synthetic panel (20 countries, boys reading) with a quick config."""
    d = tmp_path_factory.mktemp("fixture")
    write_fixture(d, n_countries=20, groups=["boys"], domains=["reading"],
                  mcmc={"n_chains": 2, "n_iter": 700, "burn_in": 200}, bma_iter=4000)
    return d


@pytest.fixture(scope="session")
def full_fixture_dir(tmp_path_factory):
    """All 53 reference countries and 31 indicators."""
    d = tmp_path_factory.mktemp("full")
    write_fixture(d, n_countries=53, groups=["boys"], domains=["reading"],
                  mcmc={"n_chains": 2, "n_iter": 700, "burn_in": 200}, bma_iter=4000)
    return d
