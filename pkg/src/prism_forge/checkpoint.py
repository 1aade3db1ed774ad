"""Flat binary checkpoint format for named float64 arrays.

Layout (all integers little-endian):

    magic   4 bytes  b"PRFG"
    version u32      currently 1
    count   u32      number of arrays
    then per array:
        name_len u16, name utf-8 bytes
        ndim     u16, dims u64 * ndim
        data     float64 little-endian, row-major
"""

from __future__ import annotations

import os
import struct

import numpy as np

__all__ = ["save_arrays", "load_arrays", "save_encoder", "load_encoder", "save_head", "load_head"]

MAGIC = b"PRFG"
VERSION = 1


def save_arrays(path: str | os.PathLike, arrays: dict[str, np.ndarray]) -> None:
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, len(arrays)))
        for name, arr in arrays.items():
            arr = np.ascontiguousarray(np.asarray(arr, dtype="<f8"))
            nb = name.encode("utf-8")
            f.write(struct.pack("<H", len(nb)))
            f.write(nb)
            f.write(struct.pack("<H", arr.ndim))
            for d in arr.shape:
                f.write(struct.pack("<Q", d))
            f.write(arr.tobytes())


def load_arrays(path: str | os.PathLike) -> dict[str, np.ndarray]:
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != MAGIC:
        raise ValueError(f"{path}: bad checkpoint magic {data[:4]!r}")
    version, count = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    pos = 12
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", data, pos)
        pos += 2
        name = data[pos : pos + name_len].decode("utf-8")
        pos += name_len
        (ndim,) = struct.unpack_from("<H", data, pos)
        pos += 2
        shape = []
        for _ in range(ndim):
            (d,) = struct.unpack_from("<Q", data, pos)
            pos += 8
            shape.append(d)
        n = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(data, dtype="<f8", count=n, offset=pos).reshape(shape)
        pos += n * 8
        out[name] = arr.copy()
    return out


def save_encoder(path: str | os.PathLike, params) -> None:
    save_arrays(path, params.arrays())


def load_encoder(path: str | os.PathLike):
    from .embedding import EncoderParams

    return EncoderParams(**load_arrays(path))


def save_head(path: str | os.PathLike, head) -> None:
    save_arrays(path, head.arrays())


def load_head(path: str | os.PathLike):
    from .embedding import MlpHead

    return MlpHead(**load_arrays(path))
