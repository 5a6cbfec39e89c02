import numpy as np
import pytest

from barotrack.kinematics import mean_skeleton


@pytest.fixture(scope="session")
def skel():
    return mean_skeleton()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
