import numpy as np
import pytest

import sepsurf as ss


@pytest.fixture(scope="session")
def circular():
    return ss.preset("circular")


@pytest.fixture(scope="session")
def kepler():
    return ss.preset("paper-kepler")


@pytest.fixture(scope="session")
def collinear():
    return ss.preset("collinear-e1")


@pytest.fixture(scope="session")
def presets(circular, kepler, collinear):
    return (circular, kepler, collinear)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240911)


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: criterion-level checks")
