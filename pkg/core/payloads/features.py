"""Feature-vector sidecar: ``HPCF64 1 <rows> <dim>\\n`` then little-endian float64."""

import numpy as np

from core.payloads import register_codec
from core.payloads.base import PayloadCodec, PayloadError, split_header

_DTYPE = np.dtype("<f8")


@register_codec
class FeatureCodec(PayloadCodec):
    SUFFIX = ".f64"
    MAGIC = "HPCF64"
    INPUT_MODE = "features"

    def encode(self, inputs: np.ndarray) -> bytes:
        inputs = np.asarray(inputs)
        if inputs.ndim != 2:
            raise PayloadError(f"Feature payloads must be 2-D (rows, dim), got shape {inputs.shape}")
        rows, dim = inputs.shape
        header = f"{self.MAGIC} 1 {rows} {dim}\n".encode("ascii")
        return header + np.ascontiguousarray(inputs, dtype=_DTYPE).tobytes()

    def decode(self, content: bytes) -> np.ndarray:
        fields, body = split_header(content, self.MAGIC)
        if len(fields) != 3 or fields[0] != "1":
            raise PayloadError(f"Unsupported feature sidecar header: {fields}")
        try:
            rows, dim = int(fields[1]), int(fields[2])
        except ValueError as e:
            raise PayloadError(f"Bad row or dimension count in header: {fields}") from e
        expected = rows * dim * _DTYPE.itemsize
        if len(body) != expected:
            raise PayloadError(f"Feature sidecar body has {len(body)} bytes, expected {expected}")
        return np.frombuffer(body, dtype=_DTYPE).reshape(rows, dim).astype(np.float64)
