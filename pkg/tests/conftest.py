import numpy as np
import pytest

from derev import StftConfig, build_bin_models, uniform_linear_array


@pytest.fixture(scope="session")
def stft_cfg():
    return StftConfig()


@pytest.fixture(scope="session")
def geometry():
    return uniform_linear_array()


@pytest.fixture(scope="session")
def bin_models(geometry, stft_cfg):
    return build_bin_models(geometry, np.pi / 4, 0.0, stft_cfg)


def random_complex(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
