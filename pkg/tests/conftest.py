import numpy as np
import pytest

from nrcnet import autodiff as ad
from nrcnet import noise_lab


@pytest.fixture(scope="session")
def small_corpus():
    """Five frames per class plus lung noise; shared across tests."""
    return noise_lab.synth_corpus(5, seed=11)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def f64():
    """Gradient checks run in 64-bit; restore the training default afterwards."""
    ad.set_default_dtype(np.float64)
    yield
    ad.set_default_dtype(np.float32)
