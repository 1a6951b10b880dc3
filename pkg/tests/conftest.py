import numpy as np
import pytest

from polyprune import TwoLayerNetwork, make_synthetic


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_binary():
    """A 24-example, 6-feature binary dataset with unit-norm rows."""
    return make_synthetic(24, 6, task="binary", seed=7)


@pytest.fixture
def small_net(small_binary):
    net = TwoLayerNetwork(n_neurons=12, random_state=3)
    net.initialize(small_binary.n_features)
    return net
