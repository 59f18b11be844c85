import numpy as np
import pytest


@pytest.fixture
def rng_np():
    # oracle-side randomness only; library code uses musens.rng
    return np.random.default_rng(12345)


def random_channel(gen, K, M):
    return (gen.standard_normal((K, M)) + 1j * gen.standard_normal((K, M))) / np.sqrt(2.0)
