import numpy as np
import pytest

from mfbm import CovarianceSpec, SpectralSpace


@pytest.fixture
def space1():
    return SpectralSpace([1.0])


@pytest.fixture
def space3():
    return SpectralSpace([1.0, 2.0, 3.0])


@pytest.fixture
def q3():
    return CovarianceSpec([1.0, 0.5, 0.25])


@pytest.fixture(autouse=True)
def _no_seed_env(monkeypatch):
    # an MFBM_SEED in the environment would silently change every seeded test
    monkeypatch.delenv("MFBM_SEED", raising=False)


def rel(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))
