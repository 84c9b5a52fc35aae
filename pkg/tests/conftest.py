from __future__ import annotations

import numpy as np
import pytest
from hypothesis import settings

from jacobiloc.model import JacobiSample, ModelConfig, SingleSiteDensity
from jacobiloc.tridiag import build_truncation, eigen_decompose

settings.register_profile("jacobiloc", deadline=None, max_examples=40, derandomize=True)
settings.load_profile("jacobiloc")


def free_system(L: int = 1, b=None, a=None):
    """Eigensystem of the window [-L, L] with given (default free) coefficients."""
    b = np.zeros(2 * L + 1) if b is None else np.asarray(b, dtype=float)
    a = np.ones(2 * L) if a is None else np.asarray(a, dtype=float)
    return eigen_decompose(build_truncation(JacobiSample(b=b, a=a, L=L)))


@pytest.fixture
def anderson_config():
    """Uniform disorder on [0, 1], a = 1, c = 0, d = 1."""
    return ModelConfig(SingleSiteDensity.uniform(0.0, 1.0), L=50, master_seed=0, samples=200)
