import numpy as np
import pytest

from narate import DistortionSpec, FiniteMarkovSource, StateSpaceModel


def markov_source(flip, horizon):
    return FiniteMarkovSource([0.5, 0.5], [[1 - flip, flip], [flip, 1 - flip]], horizon)


def random_markov(rng, horizon, nx=2):
    init = rng.dirichlet(np.ones(nx))
    trans = rng.dirichlet(np.ones(nx), size=nx)
    return FiniteMarkovSource(init, trans, horizon)


@pytest.fixture
def hamming2():
    return DistortionSpec.hamming(2)


@pytest.fixture
def scalar_model():
    return StateSpaceModel([[0.5]], [[1.0]], [[1.0]], [[1.0]], x0_cov=[[1.0]])


@pytest.fixture
def model_p2():
    return StateSpaceModel(
        [[0.9, 0.2], [0.0, 0.5]], np.eye(2), [[1.0, 0.0], [0.3, 1.0]], 0.5 * np.eye(2)
    )
