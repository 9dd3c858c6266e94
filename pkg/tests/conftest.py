import numpy as np
import pytest
from hypothesis import settings

# jit compilation makes the first example of a property slow
settings.register_profile("formcount", deadline=None, max_examples=40)
settings.load_profile("formcount")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
