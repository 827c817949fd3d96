"""
Binary parameter checkpoints.

Layout (little-endian):
    8 bytes   magic b"RSQPARM\\x00"
    uint32    format version
    uint32    number of layers
    per layer: uint16 name length, UTF-8 name, uint8 ndim, ndim x uint32 dims
    then every layer's values as float64, in manifest order
"""

import logging
import struct
from pathlib import Path

import numpy as np

from riskseq.errors import DataFormatError
from riskseq.tensor_autonet.network import ConvNetConfig, ModelParams

logger = logging.getLogger(__name__)

MAGIC = b"RSQPARM\x00"
VERSION = 1


def save_params(params: ModelParams, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = [MAGIC, struct.pack("<II", VERSION, len(params))]
    for name, value in params.items():
        encoded = name.encode("utf-8")
        header.append(struct.pack("<H", len(encoded)) + encoded)
        header.append(struct.pack(f"<B{value.ndim}I", value.ndim, *value.shape))
    payload = [np.ascontiguousarray(value, dtype="<f8").tobytes() for value in params.values()]
    path.write_bytes(b"".join(header + payload))
    logger.info(f"Saved {len(params)} parameter tensors to {path}")
    return path


class _Reader:
    def __init__(self, data: bytes, path: str):
        self.data = data
        self.offset = 0
        self.path = path

    def unpack(self, fmt: str, what: str) -> tuple:
        size = struct.calcsize(fmt)
        if self.offset + size > len(self.data):
            raise DataFormatError(f"truncated checkpoint while reading {what}", self.offset, self.path)
        values = struct.unpack_from(fmt, self.data, self.offset)
        self.offset += size
        return values

    def take(self, size: int, what: str) -> bytes:
        if self.offset + size > len(self.data):
            raise DataFormatError(f"truncated checkpoint while reading {what}", self.offset, self.path)
        chunk = self.data[self.offset:self.offset + size]
        self.offset += size
        return chunk


def load_params(path: str | Path, config: ConvNetConfig | None = None) -> ModelParams:
    """
    Reads a checkpoint written by save_params().

    Args:
        path (str | Path): Checkpoint file.
        config (ConvNetConfig | None): When given, every layer must match the config's
            names and shapes.

    Returns:
        ModelParams: The stored parameters, bit-identical to what was saved.

    Raises:
        DataFormatError: Bad magic, unsupported version, truncation, trailing bytes, or a
            layer that does not match the config.
    """
    path = Path(path)
    reader = _Reader(path.read_bytes(), str(path))

    if reader.take(len(MAGIC), "magic") != MAGIC:
        raise DataFormatError("not a parameter checkpoint (bad magic)", 0, str(path))
    version, n_layers = reader.unpack("<II", "header")
    if version != VERSION:
        raise DataFormatError(f"unsupported checkpoint version {version}, expected {VERSION}", 8, str(path))

    manifest = []
    for _ in range(n_layers):
        (name_len,) = reader.unpack("<H", "layer name length")
        name_offset = reader.offset
        try:
            name = reader.take(name_len, "layer name").decode("utf-8")
        except UnicodeDecodeError as e:
            raise DataFormatError("layer name is not valid UTF-8", name_offset, str(path)) from e
        (ndim,) = reader.unpack("<B", f"rank of {name}")
        shape = reader.unpack(f"<{ndim}I", f"shape of {name}")
        manifest.append((name, tuple(shape)))

    params = ModelParams()
    for name, shape in manifest:
        count = int(np.prod(shape))
        raw = reader.take(8 * count, f"values of {name}")
        params[name] = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)

    if reader.offset != len(reader.data):
        raise DataFormatError(f"{len(reader.data) - reader.offset} trailing bytes", reader.offset, str(path))

    if config is not None:
        expected = config.param_shapes()
        for name, shape in expected.items():
            if name not in params:
                raise DataFormatError(f"layer {name} missing from checkpoint", path=str(path))
            if params[name].shape != shape:
                raise DataFormatError(
                    f"shape mismatch in layer {name}: checkpoint {params[name].shape}, config {shape}",
                    path=str(path),
                )
        extra = [name for name in params if name not in expected]
        if extra:
            raise DataFormatError(f"checkpoint has layers the config lacks: {extra}", path=str(path))
    return params
