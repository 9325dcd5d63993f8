import numpy as np
import pytest

from fanorm.extractor import tiny_spec
from fanorm.model import NormalizationModel


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_model():
    """Small full model shared by read-only tests: tiny extractor, latent 4."""
    spec, weights = tiny_spec(0)
    return NormalizationModel.create(spec, weights, latent_channels=4,
                                     rng=np.random.default_rng(99))


def rel_err(analytic, numeric):
    """Max elementwise relative error with an absolute floor, so exactly-zero
    gradients (dead branches) compare sanely."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))


def central_diff(f, x, delta=1e-3):
    """Gradient of scalar f at x by central differences, elementwise."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        xp = x.copy()
        xp[i] += delta
        xm = x.copy()
        xm[i] -= delta
        g[i] = (f(xp) - f(xm)) / (2 * delta)
    return g
