import numpy as np
import pytest

from mimic.model import make_synthetic_model


@pytest.fixture(scope="session")
def small_model():
    """Compact model shared by math-heavy tests."""
    return make_synthetic_model(seed=7, n_vertices=160, n_id=6, n_exp=8)


@pytest.fixture(scope="session")
def full_model():
    """Default-size model (3000 vertices, 20+20 coefficients)."""
    return make_synthetic_model(seed=11)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
