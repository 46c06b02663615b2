"""Small model configurations shared by the architecture tests."""

import numpy as np
import pytest

from core.architectures.base import UnifiedModelConfig


def small_config(**overrides) -> UnifiedModelConfig:
    """d=16, classes 5/7/6, identity encoder over 8-wide features."""
    values = dict(
        backbone_dim=8,
        feature_dim=8,
        hidden_dim=16,
        n_categories=5,
        n_sub_categories=7,
        n_attributes=6,
    )
    values.update(overrides)
    return UnifiedModelConfig(**values)


def random_inputs(config: UnifiedModelConfig, batch: int = 4, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    if config.input_mode == "images":
        size = config.image_size
        return rng.integers(0, 256, size=(batch, size, size, 3), dtype=np.uint8)
    return rng.normal(size=(batch, config.feature_dim))


@pytest.fixture
def config():
    return small_config()


@pytest.fixture
def inputs(config):
    return random_inputs(config)
