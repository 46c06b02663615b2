"""Tests for codec registration and detection."""

import pytest

from core.payloads import PayloadError, codec_for_mode, detect_codec, detect_codec_by_content, get_all_codecs
from core.payloads.features import FeatureCodec
from core.payloads.images import ImageCodec


class TestRegistry:
    def test_both_codecs_registered(self):
        assert set(get_all_codecs()) == {FeatureCodec, ImageCodec}

    def test_by_suffix(self):
        assert isinstance(detect_codec("manifest.f64"), FeatureCodec)
        assert isinstance(detect_codec("manifest.rgb"), ImageCodec)
        assert detect_codec("manifest.bin") is None

    def test_by_content(self):
        assert isinstance(detect_codec_by_content(b"HPCRGB 1 0 8 8\n", "inputs.bin"), ImageCodec)
        assert isinstance(detect_codec_by_content(b"HPCF64 1 0 4\n", "inputs.bin"), FeatureCodec)
        assert detect_codec_by_content(b"PNG", "inputs.bin") is None

    def test_for_mode(self):
        assert isinstance(codec_for_mode("images"), ImageCodec)
        assert codec_for_mode("features").default_filename == "features.f64"

    def test_unknown_mode(self):
        with pytest.raises(PayloadError):
            codec_for_mode("audio")
