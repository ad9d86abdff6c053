import numpy as np
import pytest

from lsmsim.lsm import LifParams, build_reservoir
from lsmsim.memristor import sample_conductance


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_reservoir(U=5, h=4, seed=0, scale=0.1, read_noise_std=0.0, u_th=1.0, decay=0.9):
    arr = sample_conductance(U + h, h + 1, seed=seed)
    return build_reservoir(arr, U, h, LifParams(u_th=u_th, decay=decay), scale, read_noise_std)
