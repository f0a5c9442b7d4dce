import numpy as np
import pytest

from wncs.controller import TrainConfig, train_policy
from wncs.plant import mountain_car

DESK_TRAIN = dict(epochs=20, episodes_per_epoch=50, horizon=200)


@pytest.fixture(scope="session")
def model():
    return mountain_car()


@pytest.fixture(scope="session")
def desk_policy(model):
    """One desk-scale trained tail policy shared across test modules."""
    policy, curve = train_policy(model, TrainConfig(seed=0, **DESK_TRAIN))
    assert np.isfinite(curve[-1].mean)
    return policy


@pytest.fixture(scope="session")
def desk_policy_file(desk_policy, tmp_path_factory):
    from wncs.controller import save_policy

    path = tmp_path_factory.mktemp("policy") / "policy.txt"
    save_policy(desk_policy, path)
    return str(path)
