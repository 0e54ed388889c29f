import numpy as np
import pytest

from infip.datasets import derive_seed, make_synthetic_dataset
from infip.fingerprint import extract_fingerprint_set, select_key_instances
from infip.model import build_preset_model
from infip.training import TrainConfig, train_sgd

DEFAULT_LAMBDA = 5000.0


def train_preset(seed, data, epochs=8, lr=0.05):
    model = build_preset_model(derive_seed(seed, "model-init"))
    cfg = TrainConfig(
        learning_rate=lr,
        epochs=epochs,
        batch_size=32,
        seed=derive_seed(seed, "train-order"),
        momentum=0.9,
    )
    return train_sgd(model, data, cfg)


@pytest.fixture(scope="session")
def train_ds():
    return make_synthetic_dataset(1600, 1, tag="train")


@pytest.fixture(scope="session")
def test_ds():
    return make_synthetic_dataset(400, 1, tag="test")


@pytest.fixture(scope="session")
def attacker_ds():
    return make_synthetic_dataset(1000, 1, tag="attacker")


@pytest.fixture(scope="session")
def model_a(train_ds):
    """Preset model trained to convergence, seed stream 1."""
    return train_preset(1, train_ds)


@pytest.fixture(scope="session")
def model_b(train_ds):
    """Independently trained twin of model_a (same data, seed stream 2)."""
    return train_preset(2, train_ds)


@pytest.fixture(scope="session")
def keys400(test_ds):
    return select_key_instances(test_ds, 400, seed=5)


@pytest.fixture(scope="session")
def fps_a(model_a, keys400):
    return extract_fingerprint_set(model_a, keys400, DEFAULT_LAMBDA)


@pytest.fixture(scope="session")
def small_train_ds():
    return make_synthetic_dataset(300, 11, tag="train")


@pytest.fixture(scope="session")
def small_model(small_train_ds):
    """Quickly trained preset model for unit tests that just need a real net."""
    return train_preset(11, small_train_ds, epochs=3)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(1234)
