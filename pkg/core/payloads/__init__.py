"""Sidecar formats holding the inputs referenced by a manifest."""

from .base import PayloadCodec, PayloadError

# Codec registry - import codecs here to register them
_codecs: list[type[PayloadCodec]] = []


def register_codec(codec_class: type[PayloadCodec]) -> type[PayloadCodec]:
    """Decorator to register a payload codec class."""
    _codecs.append(codec_class)
    return codec_class


def get_all_codecs() -> list[type[PayloadCodec]]:
    """Return all registered codec classes."""
    return _codecs.copy()


def detect_codec(filename: str) -> PayloadCodec | None:
    """Pick a codec by file suffix."""
    for codec_class in _codecs:
        codec = codec_class()
        if codec.can_read(filename):
            return codec
    return None


def detect_codec_by_content(content: bytes, filename: str) -> PayloadCodec | None:
    """Pick a codec by its header line, for sidecars with unusual names."""
    for codec_class in _codecs:
        codec = codec_class()
        if codec.can_read_content(content, filename):
            return codec
    return None


def codec_for_mode(input_mode: str) -> PayloadCodec:
    for codec_class in _codecs:
        if codec_class.INPUT_MODE == input_mode:
            return codec_class()
    raise PayloadError(f"No payload format for input mode {input_mode!r}")


from . import features, images  # noqa: E402,F401
