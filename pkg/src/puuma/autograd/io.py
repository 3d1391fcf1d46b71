"""Binary tensor format: b"PUMT", u32 rank, u32 extents, little-endian f32 payload."""

from __future__ import annotations

import struct
from typing import BinaryIO

import numpy as np

MAGIC = b"PUMT"


class FormatError(ValueError):
    pass


def tensor_to_bytes(arr: np.ndarray) -> bytes:
    arr = np.asarray(arr)
    head = MAGIC + struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
    return head + np.ascontiguousarray(arr, dtype="<f4").tobytes()


def _read(fh: BinaryIO, n: int) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise FormatError(f"truncated tensor header: wanted {n} bytes, got {len(buf)}")
    return buf


def read_tensor(fh: BinaryIO) -> np.ndarray:
    magic = fh.read(4)
    if magic != MAGIC:
        raise FormatError(f"bad tensor magic {magic!r}")
    (rank,) = struct.unpack("<I", _read(fh, 4))
    shape = struct.unpack(f"<{rank}I", _read(fh, 4 * rank)) if rank else ()
    count = int(np.prod(shape)) if shape else 1
    payload = fh.read(4 * count)
    if len(payload) != 4 * count:
        raise FormatError("truncated tensor payload")
    return np.frombuffer(payload, dtype="<f4").astype(np.float32).reshape(shape)


def tensor_from_bytes(buf: bytes) -> np.ndarray:
    import io
    return read_tensor(io.BytesIO(buf))
