import time

import pytest

import fundus_xai as fx
from fundus_xai.backbone import TrainConfig


@pytest.fixture(scope="session")
def toy_data():
    """The standard quadrant dataset used across training-dependent tests."""
    return fx.make_quadrant_dataset(400, 100, seed=11)


@pytest.fixture(scope="session")
def trained_toy(toy_data):
    """A fully trained toy model, its history, and the wall time it took."""
    train_set, _ = toy_data
    config = TrainConfig(epochs=60, seed=5)
    t0 = time.perf_counter()
    params, history = fx.train(train_set, config)
    elapsed = time.perf_counter() - t0
    return params, history, elapsed, config
