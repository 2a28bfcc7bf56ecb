"""Shared fixtures: one simulated sample reused across test modules."""

import pytest

from drmean import dgp

SEED = 20260819


@pytest.fixture(scope="session")
def sample_1000():
    return dgp.generate_sample(1000, SEED)


@pytest.fixture(scope="session")
def right_view(sample_1000):
    return dgp.make_view(sample_1000, pi_model_correct=True, m_model_correct=True)


@pytest.fixture(scope="session")
def wrong_view(sample_1000):
    return dgp.make_view(sample_1000, pi_model_correct=False, m_model_correct=False)
