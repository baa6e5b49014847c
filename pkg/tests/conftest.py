import numpy as np
import pytest

from resokit.potential import BasePotential


@pytest.fixture(scope="session")
def free_base():
    return BasePotential.free()


@pytest.fixture(scope="session")
def g1_base():
    return BasePotential.rational_g1()


@pytest.fixture()
def rng():
    return np.random.default_rng(20230801)
