import numpy as np
import pytest

from gravpose.geometry import StereoRig
from gravpose.sim import SimConfig


@pytest.fixture
def rig() -> StereoRig:
    return StereoRig()


@pytest.fixture
def cfg() -> SimConfig:
    return SimConfig()


def make_rng(*tag):
    return np.random.default_rng(np.random.SeedSequence(tuple(int(t) for t in tag)))


@pytest.fixture
def rng():
    return make_rng(20250810)
