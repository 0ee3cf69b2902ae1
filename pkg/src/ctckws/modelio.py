"""Versioned binary model file.

Layout (little endian)::

    magic      8 bytes   b"CTCSPOT1"
    version    uint32
    config     uint32 length + UTF-8 JSON (sorted keys)
    alphabet   uint32 length + UTF-8 labels, then uint32 boundary index, uint32 blank index
    normalizer uint32 dim, float32 mean[dim], float32 std[dim]
    tensors    uint32 count, then per tensor:
               uint16 name length + UTF-8 name, uint8 ndim, uint32 shape[ndim],
               float32 data (row-major)
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass

import numpy as np

from .ctc import Alphabet
from .features import NormalizerStats
from .lstm import NetworkConfig, param_shapes

MAGIC = b"CTCSPOT1"
VERSION = 1


class ModelFormatError(ValueError):
    pass


@dataclass
class Model:
    params: dict
    config: NetworkConfig
    stats: NormalizerStats
    alphabet: Alphabet


def _u32(n):
    return struct.pack("<I", n)


def _blob(b: bytes) -> bytes:
    return _u32(len(b)) + b


def model_bytes(params, config: NetworkConfig, stats: NormalizerStats, alphabet: Alphabet) -> bytes:
    out = io.BytesIO()
    out.write(MAGIC)
    out.write(_u32(VERSION))
    out.write(_blob(json.dumps(config.to_dict(), sort_keys=True).encode()))
    out.write(_blob(alphabet.to_string().encode()))
    out.write(_u32(alphabet.boundary_index) + _u32(alphabet.blank_index))
    out.write(_u32(stats.dim))
    out.write(np.asarray(stats.mean, dtype="<f4").tobytes())
    out.write(np.asarray(stats.std, dtype="<f4").tobytes())
    shapes = param_shapes(config)
    out.write(_u32(len(shapes)))
    for name in shapes:
        arr = np.ascontiguousarray(params[name], dtype="<f4")
        if arr.shape != shapes[name]:
            raise ModelFormatError(f"{name} has shape {arr.shape}, config implies {shapes[name]}")
        nb = name.encode()
        out.write(struct.pack("<H", len(nb)) + nb + struct.pack("<B", arr.ndim))
        out.write(b"".join(_u32(d) for d in arr.shape))
        out.write(arr.tobytes())
    return out.getvalue()


def save_model(path, params, config: NetworkConfig, stats: NormalizerStats, alphabet: Alphabet):
    data = model_bytes(params, config, stats, alphabet)
    with open(path, "wb") as fh:
        fh.write(data)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ModelFormatError("truncated model file")
        b = self.data[self.pos:self.pos + n]
        self.pos += n
        return b

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def floats(self, n: int) -> np.ndarray:
        return np.frombuffer(self.take(4 * n), dtype="<f4").copy()


def load_model(path) -> Model:
    with open(path, "rb") as fh:
        r = _Reader(fh.read())
    if r.take(len(MAGIC)) != MAGIC:
        raise ModelFormatError("bad magic number; not a CTCSPOT1 model file")
    version = r.u32()
    if version != VERSION:
        raise ModelFormatError(f"unsupported model version {version}")
    try:
        config = NetworkConfig.from_dict(json.loads(r.take(r.u32()).decode()))
        labels = r.take(r.u32()).decode()
    except (ValueError, TypeError) as exc:
        raise ModelFormatError(f"corrupt header: {exc}") from None
    boundary, blank = r.u32(), r.u32()
    if max(boundary, blank) >= len(labels):
        raise ModelFormatError("alphabet indices out of range")
    alphabet = Alphabet(tuple(labels), boundary=labels[boundary], blank=labels[blank])
    dim = r.u32()
    stats = NormalizerStats(r.floats(dim), r.floats(dim))
    shapes = param_shapes(config)
    count = r.u32()
    params = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<H", r.take(2))
        name = r.take(nlen).decode()
        (ndim,) = struct.unpack("<B", r.take(1))
        shape = tuple(r.u32() for _ in range(ndim))
        if shapes.get(name) != shape:
            raise ModelFormatError(f"tensor {name} has shape {shape}, config implies {shapes.get(name)}")
        params[name] = r.floats(int(np.prod(shape))).reshape(shape).astype(config.dtype)
    if set(params) != set(shapes):
        raise ModelFormatError("tensor table does not match the network config")
    if r.pos != len(r.data):
        raise ModelFormatError("trailing bytes after tensor table")
    if config.output_dim != len(alphabet):
        raise ModelFormatError("output dimension does not match the alphabet size")
    return Model(params, config, stats, alphabet)
