import numpy as np
import pytest

from markovls import StateSpaceModel, mimo_paper, siso_paper


@pytest.fixture
def siso():
    return siso_paper()


@pytest.fixture
def mimo():
    return mimo_paper()


def random_system(rng, n_x=2, n_u=1, n_y=1, spectral_radius=None):
    """Random model; rescales A to the requested spectral radius when given."""
    A = rng.standard_normal((n_x, n_x))
    if spectral_radius is not None:
        rho = np.abs(np.linalg.eigvals(A)).max()
        if rho > 0:
            A *= spectral_radius / rho
    return StateSpaceModel(
        A=A,
        B=rng.standard_normal((n_x, n_u)),
        C=rng.standard_normal((n_y, n_x)),
        D=rng.standard_normal((n_y, n_u)),
        K=rng.standard_normal((n_x, n_y)),
    )
