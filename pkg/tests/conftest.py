import numpy as np
import pytest

from dicect import Geometry, forward_project, shepp_logan


@pytest.fixture(scope="session")
def geom32():
    # 32x32 image, 64 detectors, 90 uniform views
    return Geometry.uniform(32, n_angles=90, n_detectors=64)


@pytest.fixture(scope="session")
def geom64():
    return Geometry.uniform(64, n_angles=120)


@pytest.fixture(scope="session")
def phantom64():
    return shepp_logan(64)


@pytest.fixture(scope="session")
def sino64(geom64, phantom64):
    return forward_project(phantom64, geom64)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
