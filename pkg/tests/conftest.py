import importlib.resources

import numpy as np
import pytest

from ascertain import as_pair, read_tables_csv


def _load(name):
    text = importlib.resources.files("ascertain").joinpath(f"data/{name}").read_text()
    return as_pair(read_tables_csv(text))


@pytest.fixture(scope="session")
def nvdrs_pair():
    return _load("nvdrs.csv")


@pytest.fixture(scope="session")
def nvdrs_completed_pair():
    return _load("nvdrs_completed.csv")


@pytest.fixture
def rng():
    return np.random.default_rng(20260814)


def random_params(rng, J, scale=1.0):
    """Random dynamic-model parameters, reasonably scaled."""
    from ascertain import RaschParams
    from ascertain.rasch import n_pairs

    return RaschParams(
        alpha=rng.normal(0.0, scale, J),
        alpha2=rng.normal(0.0, scale, n_pairs(J)),
        theta=float(rng.normal(0.0, scale)),
        model="dynamic",
    )
