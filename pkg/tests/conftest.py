import numpy as np
import pytest

from ncg.dataset import LabeledDataset


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_dataset(rng, n=60, d=3, C=3, name="rand"):
    labels = np.concatenate([np.arange(C), rng.integers(0, C, size=n - C)])
    return LabeledDataset(rng.standard_normal((n, d)), labels, C, name=name)


@pytest.fixture
def small_ds(rng):
    return random_dataset(rng)
