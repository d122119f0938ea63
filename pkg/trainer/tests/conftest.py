import numpy as np
import pytest

from lhdr_trainer.data import make_dataset


@pytest.fixture
def rng():
    return np.random.default_rng(4321)


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """A small simulated dataset, generated once per session via the runtime CLI."""
    root = tmp_path_factory.mktemp("tiny_data")
    return make_dataset(root, count=10, seed=77, size=96, n_frames=3)
