import numpy as np
import pytest

from gbcd import make_constellation


@pytest.fixture(scope="session")
def qam16():
    return make_constellation(16)


@pytest.fixture(scope="session")
def qam256():
    return make_constellation(256)


@pytest.fixture()
def rng():
    return np.random.default_rng(0xC0FFEE)


def random_channel(rng, B, U):
    return (rng.standard_normal((B, U)) + 1j * rng.standard_normal((B, U))) / np.sqrt(2)
