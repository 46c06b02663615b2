"""Tests for the feature and image encoders."""

import numpy as np
import pytest
from tests.test_architectures.conftest import small_config

from core.architectures.encoder import FeatureEncoder, ImageEncoder, build_encoder, encoder_stage_counts
from core.tensor import ShapeError


class TestFeatureEncoder:
    def test_identity_without_stages(self):
        encoder = build_encoder(small_config(), np.random.default_rng(0))
        x = np.random.default_rng(1).normal(size=(3, 8))
        np.testing.assert_array_equal(encoder(x).data, x)
        assert encoder.parameters() == []

    def test_stages_are_relu_dense(self):
        encoder = FeatureEncoder("e", 4, 6, 2, np.random.default_rng(0))
        out = encoder(np.random.default_rng(1).normal(size=(3, 4)))
        assert out.shape == (3, 6)
        assert (out.data >= 0).all()
        assert encoder.output_dim == 6

    def test_width_mismatch(self):
        encoder = FeatureEncoder("e", 4, 4, 0, np.random.default_rng(0))
        with pytest.raises(ShapeError, match=r"\(batch, 4\)"):
            encoder(np.zeros((2, 5)))

    def test_stage_counts(self):
        assert encoder_stage_counts(small_config(encoder_stages=2)) == [72, 72]
        assert encoder_stage_counts(small_config()) == []


class TestImageEncoder:
    def test_output_dim(self):
        encoder = ImageEncoder("e", 16, np.random.default_rng(0))
        images = np.random.default_rng(1).integers(0, 256, size=(2, 16, 16, 3), dtype=np.uint8)
        out = encoder(images)
        assert encoder.output_dim == 32 * 2 * 2
        assert out.shape == (2, 128)

    def test_config_encoder_dim(self):
        assert small_config(input_mode="images", image_size=32).encoder_dim == 32 * 4 * 4

    def test_wrong_raster_size(self):
        encoder = ImageEncoder("e", 8, np.random.default_rng(0))
        with pytest.raises(ShapeError):
            encoder(np.zeros((1, 16, 16, 3), dtype=np.uint8))

    def test_black_image_maps_to_zero(self):
        encoder = ImageEncoder("e", 8, np.random.default_rng(0))
        # biases start at zero, so a black image maps to zeros
        out = encoder(np.zeros((1, 8, 8, 3), dtype=np.uint8))
        assert not out.data.any()

    def test_stage_counts(self):
        counts = encoder_stage_counts(small_config(input_mode="images", image_size=8))
        assert counts == [3 * 8 * 9 + 8, 8 * 16 * 9 + 16, 16 * 32 * 9 + 32]
