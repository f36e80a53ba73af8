"""Binary container formats for quantized tensors and weight sets.

Tensor format (magic "PTEA1"), all little-endian:
    magic, u8 rank, u32 dims[rank], u8 width_bits, u8 frac_bits,
    raw signed integers (int8 or int16 by width) row-major.

Weight container (magic "PTEAW"):
    magic, u16 version, u32 tensor_count, then per tensor:
    u16 name_len, UTF-8 name, u8 rank, u32 dims[rank],
    u8 width_bits, u8 frac_bits, raw payload as above.
"""

import hashlib
import io
import struct

import numpy as np

from .config import FixedFormat
from .fixedpoint import FxTensor

TENSOR_MAGIC = b"PTEA1"
WEIGHTS_MAGIC = b"PTEAW"
WEIGHTS_VERSION = 1

_DTYPES = {8: np.dtype("<i1"), 16: np.dtype("<i2")}


class FormatError(ValueError):
    """Corrupt or unsupported container file."""


def _dtype_for(width_bits: int) -> np.dtype:
    if width_bits not in _DTYPES:
        raise FormatError("unsupported width_bits %d" % width_bits)
    return _DTYPES[width_bits]


def _pack_tensor(buf, t: FxTensor) -> None:
    raw = t.raw
    buf.write(struct.pack("<B", raw.ndim))
    for extent in raw.shape:
        buf.write(struct.pack("<I", extent))
    buf.write(struct.pack("<BB", t.fmt.width_bits, t.fmt.frac_bits))
    buf.write(np.ascontiguousarray(raw, dtype=_dtype_for(t.fmt.width_bits)).tobytes())


def _unpack_tensor(buf) -> FxTensor:
    rank = struct.unpack("<B", _read(buf, 1))[0]
    dims = [struct.unpack("<I", _read(buf, 4))[0] for _ in range(rank)]
    width_bits, frac_bits = struct.unpack("<BB", _read(buf, 2))
    dtype = _dtype_for(width_bits)
    count = 1
    for extent in dims:
        count *= extent
    payload = _read(buf, count * dtype.itemsize)
    raw = np.frombuffer(payload, dtype=dtype).astype(np.int64).reshape(dims)
    return FxTensor(raw, FixedFormat(width_bits, frac_bits))


def _read(buf, n: int) -> bytes:
    data = buf.read(n)
    if len(data) != n:
        raise FormatError("truncated file (wanted %d bytes, got %d)" % (n, len(data)))
    return data


def tensor_bytes(t: FxTensor) -> bytes:
    buf = io.BytesIO()
    buf.write(TENSOR_MAGIC)
    _pack_tensor(buf, t)
    return buf.getvalue()


def write_tensor(path, t: FxTensor) -> None:
    with open(path, "wb") as f:
        f.write(tensor_bytes(t))


def read_tensor(path) -> FxTensor:
    with open(path, "rb") as f:
        if f.read(len(TENSOR_MAGIC)) != TENSOR_MAGIC:
            raise FormatError("bad tensor magic in %s" % path)
        return _unpack_tensor(f)


def tensor_digest(t: FxTensor) -> str:
    """SHA-256 of the serialized tensor bytes."""
    return hashlib.sha256(tensor_bytes(t)).hexdigest()


def write_weights(path, tensors: dict) -> None:
    """tensors: name -> FxTensor; written in sorted name order."""
    with open(path, "wb") as f:
        f.write(WEIGHTS_MAGIC)
        f.write(struct.pack("<H", WEIGHTS_VERSION))
        f.write(struct.pack("<I", len(tensors)))
        for name in sorted(tensors):
            encoded = name.encode("utf-8")
            f.write(struct.pack("<H", len(encoded)))
            f.write(encoded)
            _pack_tensor(f, tensors[name])


def read_weights(path) -> dict:
    with open(path, "rb") as f:
        if f.read(len(WEIGHTS_MAGIC)) != WEIGHTS_MAGIC:
            raise FormatError("bad weight-container magic in %s" % path)
        version = struct.unpack("<H", _read(f, 2))[0]
        if version != WEIGHTS_VERSION:
            raise FormatError("unsupported weight-container version %d" % version)
        count = struct.unpack("<I", _read(f, 4))[0]
        tensors = {}
        for _ in range(count):
            name_len = struct.unpack("<H", _read(f, 2))[0]
            name = _read(f, name_len).decode("utf-8")
            tensors[name] = _unpack_tensor(f)
        return tensors
