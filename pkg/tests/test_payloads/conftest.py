"""Shared fixtures for payload codec tests."""

import numpy as np
import pytest


@pytest.fixture
def features():
    return np.random.default_rng(0).normal(size=(5, 3))


@pytest.fixture
def images():
    return np.random.default_rng(0).integers(0, 256, size=(2, 4, 6, 3), dtype=np.uint8)
