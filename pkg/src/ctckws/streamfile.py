"""Binary frame streams: features, posteriors, or decoder scores.

Layout (little endian)::

    magic   7 bytes  b"KWSTRM1"
    kind    uint8    0 = features, 1 = posteriors, 2 = scores
    dim     uint32
    period  float32  frame period in milliseconds
    frames  float32[n * dim], row-major

The frame count is implied by the payload length.
"""

from __future__ import annotations

import os
import struct

import numpy as np

MAGIC = b"KWSTRM1"
KINDS = ("features", "posteriors", "scores")
_HEADER = struct.Struct("<7sBIf")


class StreamFormatError(ValueError):
    pass


class StreamWriter:
    def __init__(self, path, kind: str, dim: int, frame_period_ms: float = 10.0):
        if kind not in KINDS:
            raise StreamFormatError(f"unknown stream kind {kind!r}")
        self.dim = dim
        self._fh = open(path, "wb")
        self._fh.write(_HEADER.pack(MAGIC, KINDS.index(kind), dim, frame_period_ms))

    def write(self, frames):
        x = np.asarray(frames, dtype="<f4")
        if x.ndim == 1:
            x = x[None, :]
        if x.shape[1] != self.dim:
            raise StreamFormatError(f"frames have dim {x.shape[1]}, stream expects {self.dim}")
        self._fh.write(np.ascontiguousarray(x).tobytes())

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class StreamReader:
    def __init__(self, path):
        self._fh = open(path, "rb")
        head = self._fh.read(_HEADER.size)
        if len(head) < _HEADER.size:
            self._fh.close()
            raise StreamFormatError("truncated stream header")
        magic, kind, dim, period = _HEADER.unpack(head)
        if magic != MAGIC:
            self._fh.close()
            raise StreamFormatError("not a KWSTRM1 stream file")
        if kind >= len(KINDS) or dim == 0:
            self._fh.close()
            raise StreamFormatError("corrupt stream header")
        payload = os.fstat(self._fh.fileno()).st_size - _HEADER.size
        if payload % (4 * dim):
            self._fh.close()
            raise StreamFormatError("payload is not a whole number of frames")
        self.kind = KINDS[kind]
        self.dim = dim
        self.frame_period_ms = period
        self.num_frames = payload // (4 * dim)

    def chunks(self, frames_per_chunk: int = 1024):
        while True:
            buf = self._fh.read(4 * self.dim * frames_per_chunk)
            if not buf:
                break
            yield np.frombuffer(buf, dtype="<f4").reshape(-1, self.dim)

    def read_all(self) -> np.ndarray:
        parts = list(self.chunks())
        return np.vstack(parts) if parts else np.zeros((0, self.dim), dtype="<f4")

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_stream(path, frames, kind: str, frame_period_ms: float = 10.0):
    frames = np.asarray(frames)
    with StreamWriter(path, kind, frames.shape[1], frame_period_ms) as w:
        w.write(frames)


def read_stream(path, expect_kind: str | None = None, expect_dim: int | None = None):
    """Returns ``(frames, kind, frame_period_ms)``."""
    with StreamReader(path) as r:
        if expect_kind is not None and r.kind != expect_kind:
            raise StreamFormatError(f"expected a {expect_kind} stream, got {r.kind}")
        if expect_dim is not None and r.dim != expect_dim:
            raise StreamFormatError(f"expected dim {expect_dim}, got {r.dim}")
        return r.read_all(), r.kind, r.frame_period_ms
