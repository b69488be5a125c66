import numpy as np
import pytest

from specmix.linkmodel import LinkStats
from specmix.mixing import AggregationMatrix


def symmetric_doubly_stochastic(n: int, rng: np.random.Generator, iters: int = 400) -> np.ndarray:
    """Random symmetric doubly stochastic matrix via symmetric scaling.

    Independent of the production restoration path on purpose: D^{-1/2} M
    D^{-1/2} iterations on a positive symmetric start converge to a doubly
    stochastic limit while preserving symmetry exactly.
    """
    m = rng.uniform(0.05, 1.0, size=(n, n))
    m = 0.5 * (m + m.T)
    np.fill_diagonal(m, rng.uniform(0.5, 1.5, size=n))
    for _ in range(iters):
        d = 1.0 / np.sqrt(m.sum(axis=1))
        m = m * d[:, None] * d[None, :]
    return 0.5 * (m + m.T)


def random_weights(n: int, rng: np.random.Generator) -> AggregationMatrix:
    return AggregationMatrix(symmetric_doubly_stochastic(n, rng))


def random_link_stats(n: int, rng: np.random.Generator, density: float = 1.0) -> LinkStats:
    q = rng.uniform(size=(n, n))
    if density < 1.0:
        q *= rng.uniform(size=(n, n)) < density
    q = 0.5 * (q + q.T)
    np.fill_diagonal(q, 0.0)
    return LinkStats(q=q)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240811)
