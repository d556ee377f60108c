"""Shared fixtures: cached desk-scale datasets and timing models."""

from functools import lru_cache

import pytest

from lagcsim.dataset import generate_dataset, paper_smoothness_law
from lagcsim.timing import TimingModel


@lru_cache(maxsize=None)
def _dataset(d, n, s, base, seed):
    return generate_dataset(d=d, n_per_partition=n, s_count=s,
                            l_targets=paper_smoothness_law(s, base=base), seed=seed)


@pytest.fixture(scope="session")
def make_dataset():
    """Factory for cached desk-scale datasets with the geometric smoothness law."""

    def factory(d=30, n=12, s=12, base=1.15, seed=5):
        return _dataset(d, n, s, base, seed)

    return factory


@pytest.fixture(scope="session")
def exp_timing():
    return TimingModel("exponential", 0.05)


@pytest.fixture(scope="session")
def pareto_timing():
    return TimingModel("pareto", 0.05, beta=2.5)
