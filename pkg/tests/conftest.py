import numpy as np
import pytest

from corrsketch.ams import RowSketchStore, SketchTransform


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def build_store(values, *, epsilon=0.05, delta=0.1, seed=5, **kwargs) -> RowSketchStore:
    values = np.asarray(values, dtype=np.float64)
    transform = SketchTransform.from_accuracy(values.shape[1], epsilon, delta, seed)
    return RowSketchStore.from_matrix(transform, values, **kwargs)


def integer_matrix(rng, n, p, lo=-8, hi=8):
    """Small-integer test matrices: sums are exact, so update order is moot."""
    return rng.integers(lo, hi + 1, size=(n, p)).astype(np.float64)
