import numpy as np
import pytest

from qmulab import datasets, learn, pqc


@pytest.fixture(scope="session")
def small_template():
    return pqc.build_layered_ansatz(2, 2, reupload=True)


@pytest.fixture(scope="session")
def moons():
    data = datasets.generate_dataset("two_moons", 60, 0.15, 7)
    return datasets.mark_forget_subcluster(data, 8, label=1)


@pytest.fixture(scope="session")
def quick_cfg():
    return learn.TrainConfig(epochs=8, seed=7)


@pytest.fixture(scope="session")
def quick_model(small_template, moons, quick_cfg):
    return learn.train(small_template, moons, quick_cfg)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
