"""Flat binary checkpoint container with a text header.

Layout (documented bit-exactly in docs/formats.md)::

    HPCCKPT 1\\n
    config\\t<key>\\t<value>\\n          (zero or more)
    tensor\\t<name>\\t<d0,d1,...>\\t<offset>\\n   (one per tensor)
    end\\n
    <data section: little-endian float64 values>

Offsets are byte offsets from the start of the data section. A scalar has an
empty shape field.
"""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from core.nn import Parameter

MAGIC = "HPCCKPT 1"
_DTYPE = np.dtype("<f8")


class CheckpointError(ValueError):
    """Raised when a checkpoint cannot be written or parsed."""
    pass


@dataclass
class Checkpoint:
    """Tensors plus a flat string config block."""
    tensors: dict[str, np.ndarray] = field(default_factory=dict)
    config: dict[str, str] = field(default_factory=dict)

    def load_into(self, params: list[Parameter]) -> None:
        """Copy stored values into ``params``; every parameter must be present."""
        for param in params:
            value = self.tensors.get(param.name)
            if value is None:
                raise CheckpointError(f"Checkpoint has no tensor named {param.name!r}")
            if value.shape != param.shape:
                raise CheckpointError(
                    f"Tensor {param.name!r} has shape {value.shape} in the checkpoint, "
                    f"but the model expects {param.shape}"
                )
            param.assign(value)


def _check_field(text: str, what: str) -> str:
    if "\t" in text or "\n" in text:
        raise CheckpointError(f"{what} {text!r} may not contain tabs or newlines")
    return text


def dumps(tensors: Mapping[str, np.ndarray], config: Mapping[str, str] | None = None) -> bytes:
    header = [MAGIC]
    for key, value in (config or {}).items():
        header.append(f"config\t{_check_field(key, 'Config key')}\t{_check_field(str(value), 'Config value')}")

    chunks = []
    offset = 0
    for name, value in tensors.items():
        array = np.ascontiguousarray(value, dtype=_DTYPE)
        shape = ",".join(str(d) for d in array.shape)
        header.append(f"tensor\t{_check_field(name, 'Tensor name')}\t{shape}\t{offset}")
        raw = array.tobytes(order="C")
        chunks.append(raw)
        offset += len(raw)
    header.append("end")

    return ("\n".join(header) + "\n").encode("utf-8") + b"".join(chunks)


def loads(content: bytes) -> Checkpoint:
    lines = []
    position = 0
    while True:
        newline = content.find(b"\n", position)
        if newline < 0:
            raise CheckpointError("Checkpoint header is not terminated by an 'end' line")
        line = content[position:newline].decode("utf-8")
        position = newline + 1
        if line == "end":
            break
        lines.append(line)

    if not lines or lines[0] != MAGIC:
        raise CheckpointError("Not a checkpoint file (missing HPCCKPT header)")

    data = content[position:]
    checkpoint = Checkpoint()
    for line in lines[1:]:
        parts = line.split("\t")
        if parts[0] == "config" and len(parts) == 3:
            checkpoint.config[parts[1]] = parts[2]
        elif parts[0] == "tensor" and len(parts) == 4:
            name, shape_text, offset_text = parts[1:]
            shape = tuple(int(d) for d in shape_text.split(",")) if shape_text else ()
            offset = int(offset_text)
            count = int(np.prod(shape, dtype=np.int64))
            end = offset + count * _DTYPE.itemsize
            if end > len(data):
                raise CheckpointError(f"Tensor {name!r} extends past the end of the file")
            array = np.frombuffer(data[offset:end], dtype=_DTYPE).reshape(shape)
            checkpoint.tensors[name] = array.astype(np.float64)
        else:
            raise CheckpointError(f"Malformed checkpoint header line: {line!r}")
    return checkpoint


def save_checkpoint(path: str | Path, params: list[Parameter], config: Mapping[str, str]) -> None:
    Path(path).write_bytes(dumps({p.name: p.tensor.data for p in params}, config))


def load_checkpoint(path: str | Path) -> Checkpoint:
    try:
        content = Path(path).read_bytes()
    except OSError as e:
        raise CheckpointError(f"Cannot read checkpoint {path}: {e}") from e
    return loads(content)
