"""Minimal binary container for named float64 tensors.

Layout (all integers little-endian)::

    b"SWHT"  uint32 version (=1)  uint32 tensor_count
    per tensor:
        uint32 name_len, name (utf-8)
        uint32 ndim, ndim x uint64 shape
        zero padding up to the next 32-byte file offset
        prod(shape) x float64 (little-endian, row-major)
        zero padding up to the next 32-byte file offset
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"SWHT"
VERSION = 1
ALIGN = 32


def _pad(n):
    return (-n) % ALIGN


def dumps(tensors):
    out = bytearray(MAGIC + struct.pack("<II", VERSION, len(tensors)))
    for name, arr in tensors.items():
        arr = np.ascontiguousarray(arr, dtype="<f8")
        raw = name.encode("utf-8")
        out += struct.pack("<I", len(raw)) + raw
        out += struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape)
        out += b"\0" * _pad(len(out))
        out += arr.tobytes(order="C")
        out += b"\0" * _pad(len(out))
    return bytes(out)


def loads(buf):
    if buf[:4] != MAGIC:
        raise ValueError("not a tensor container (bad magic)")
    version, count = struct.unpack_from("<II", buf, 4)
    if version != VERSION:
        raise ValueError(f"unsupported container version {version}")
    pos = 12
    tensors = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        name = bytes(buf[pos : pos + name_len]).decode("utf-8")
        pos += name_len
        (ndim,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        shape = struct.unpack_from(f"<{ndim}Q", buf, pos)
        pos += 8 * ndim
        pos += _pad(pos)
        size = int(np.prod(shape, dtype=np.int64))
        arr = np.frombuffer(buf, dtype="<f8", count=size, offset=pos).reshape(shape)
        tensors[name] = arr.astype(float)
        pos += 8 * size
        pos += _pad(pos)
    return tensors


def save(path, tensors):
    with open(path, "wb") as fh:
        fh.write(dumps(tensors))


def load(path):
    with open(path, "rb") as fh:
        return loads(fh.read())
