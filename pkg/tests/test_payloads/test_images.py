"""Tests for the raw RGB image sidecar."""

import numpy as np
import pytest

from core.payloads.base import PayloadError
from core.payloads.images import ImageCodec


class TestImageCodec:
    def setup_method(self):
        self.codec = ImageCodec()

    def test_header_and_layout(self, images):
        content = self.codec.encode(images)
        header = b"HPCRGB 1 2 4 6\n"
        assert content.startswith(header)
        # channels last, row-major
        assert content[len(header):len(header) + 3] == bytes(images[0, 0, 0])

    def test_decode_restores_pixels(self, images):
        decoded = self.codec.decode(self.codec.encode(images))
        np.testing.assert_array_equal(decoded, images)
        assert decoded.dtype == np.uint8
        assert decoded.flags.writeable

    def test_rejects_float_images(self):
        with pytest.raises(PayloadError, match="uint8"):
            self.codec.encode(np.zeros((1, 2, 2, 3)))

    def test_rejects_missing_channels(self):
        with pytest.raises(PayloadError, match="shape"):
            self.codec.encode(np.zeros((1, 2, 2), dtype=np.uint8))

    def test_body_length_checked(self):
        with pytest.raises(PayloadError, match="expected 12"):
            self.codec.decode(b"HPCRGB 1 1 2 2\n" + bytes(11))
