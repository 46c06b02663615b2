"""Raw RGB image sidecar.

Header ``HPCRGB 1 <rows> <height> <width>\\n`` followed by rows·height·width·3
unsigned bytes, row-major with channels last (R, G, B).
"""

import numpy as np

from core.payloads import register_codec
from core.payloads.base import PayloadCodec, PayloadError, split_header


@register_codec
class ImageCodec(PayloadCodec):
    SUFFIX = ".rgb"
    MAGIC = "HPCRGB"
    INPUT_MODE = "images"

    def encode(self, inputs: np.ndarray) -> bytes:
        inputs = np.asarray(inputs)
        if inputs.ndim != 4 or inputs.shape[3] != 3:
            raise PayloadError(f"Image payloads must have shape (rows, H, W, 3), got {inputs.shape}")
        if inputs.dtype != np.uint8:
            raise PayloadError(f"Image payloads must be uint8, got {inputs.dtype}")
        rows, height, width, _ = inputs.shape
        header = f"{self.MAGIC} 1 {rows} {height} {width}\n".encode("ascii")
        return header + np.ascontiguousarray(inputs).tobytes()

    def decode(self, content: bytes) -> np.ndarray:
        fields, body = split_header(content, self.MAGIC)
        if len(fields) != 4 or fields[0] != "1":
            raise PayloadError(f"Unsupported image sidecar header: {fields}")
        try:
            rows, height, width = (int(f) for f in fields[1:])
        except ValueError as e:
            raise PayloadError(f"Bad extents in image header: {fields}") from e
        expected = rows * height * width * 3
        if len(body) != expected:
            raise PayloadError(f"Image sidecar body has {len(body)} bytes, expected {expected}")
        return np.frombuffer(body, dtype=np.uint8).reshape(rows, height, width, 3).copy()
