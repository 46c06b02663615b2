"""Abstract base class for payload sidecar codecs."""

from __future__ import annotations

from abc import ABC, abstractmethod

import numpy as np

from core.models import InputMode


class PayloadError(ValueError):
    """Raised when a payload sidecar or payload reference cannot be read."""
    pass


def split_header(content: bytes, magic: str) -> tuple[list[str], bytes]:
    """Split ``<magic> <fields...>\\n<body>`` into (fields, body)."""
    newline = content.find(b"\n")
    if newline < 0:
        raise PayloadError("Sidecar has no header line")
    try:
        header = content[:newline].decode("ascii").split()
    except UnicodeDecodeError as e:
        raise PayloadError("Sidecar header is not ASCII") from e
    if not header or header[0] != magic:
        raise PayloadError(f"Expected a {magic} header, got {content[:newline][:40]!r}")
    return header[1:], content[newline + 1:]


class PayloadCodec(ABC):
    """Reads and writes one sidecar format holding every input of a manifest.

    Codecs are registered via the @register_codec decorator in
    core/payloads/__init__.py.
    """

    SUFFIX: str = ""
    MAGIC: str = ""
    INPUT_MODE: InputMode = "features"

    def can_read(self, filename: str) -> bool:
        return filename.endswith(self.SUFFIX)

    def can_read_content(self, content: bytes, filename: str) -> bool:
        """Check the header line for this codec's magic word."""
        return content.startswith(self.MAGIC.encode("ascii") + b" ")

    @property
    def default_filename(self) -> str:
        return f"{self.INPUT_MODE}{self.SUFFIX}"

    @abstractmethod
    def encode(self, inputs: np.ndarray) -> bytes:
        """Serialize a whole input batch (rows in manifest order)."""
        pass

    @abstractmethod
    def decode(self, content: bytes) -> np.ndarray:
        """Parse a sidecar back into a batch array.

        Raises:
            PayloadError: If the header or body is malformed
        """
        pass
