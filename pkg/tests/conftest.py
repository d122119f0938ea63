import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_image(rng, h=16, w=16, c=3, exposure=1.0):
    from luckyhdr.imaging import LinearImage

    return LinearImage(rng.random((h, w, c), dtype=np.float32), exposure_scale=exposure)
