"""Image file I/O: 8-bit PNG (via Pillow) and binary PPM/PGM.

On disk everything is 8-bit; in memory everything is float64 in [0, 1].
Depth maps are stored as PGM (P5).  Round-tripping quantizes to 1/255.
"""

from __future__ import annotations

import os

import numpy as np
from PIL import Image as PILImage

from .imaging import as_image, clamp01

__all__ = [
    "to_uint8",
    "from_uint8",
    "write_png",
    "read_png",
    "write_pnm",
    "read_pnm",
    "write_depth",
    "read_depth",
]


def to_uint8(image: np.ndarray) -> np.ndarray:
    return np.rint(clamp01(np.asarray(image, dtype=np.float64)) * 255.0).astype(np.uint8)


def from_uint8(raw: np.ndarray) -> np.ndarray:
    return np.asarray(raw, dtype=np.float64) / 255.0


def write_png(path: str | os.PathLike, image: np.ndarray) -> None:
    img = as_image(image)
    raw = to_uint8(img)
    if raw.ndim == 3 and raw.shape[2] == 1:
        raw = raw[:, :, 0]
    mode = "L" if raw.ndim == 2 else "RGB"
    PILImage.fromarray(raw, mode=mode).save(os.fspath(path), format="PNG")


def read_png(path: str | os.PathLike) -> np.ndarray:
    with PILImage.open(os.fspath(path)) as im:
        if im.mode not in ("L", "RGB"):
            im = im.convert("RGB" if im.mode not in ("1", "I", "F") else "L")
        return from_uint8(np.asarray(im))


def write_pnm(path: str | os.PathLike, image: np.ndarray) -> None:
    """Binary PGM (P5, single channel) or PPM (P6, three channels)."""
    img = as_image(image)
    raw = to_uint8(img)
    if raw.ndim == 3 and raw.shape[2] == 1:
        raw = raw[:, :, 0]
    magic = b"P5" if raw.ndim == 2 else b"P6"
    h, w = raw.shape[:2]
    with open(path, "wb") as f:
        f.write(magic + b"\n%d %d\n255\n" % (w, h))
        f.write(raw.tobytes())


def read_pnm(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as f:
        data = f.read()
    fields: list[bytes] = []
    pos = 0
    while len(fields) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    magic, w, h, maxval = fields[0], int(fields[1]), int(fields[2]), int(fields[3])
    if magic not in (b"P5", b"P6"):
        raise ValueError(f"unsupported PNM magic {magic!r}")
    if maxval != 255:
        raise ValueError(f"only 8-bit PNM supported, maxval={maxval}")
    channels = 1 if magic == b"P5" else 3
    raw = np.frombuffer(data, dtype=np.uint8, count=h * w * channels, offset=pos)
    arr = raw.reshape((h, w) if channels == 1 else (h, w, 3))
    return from_uint8(arr)


def write_depth(path: str | os.PathLike, depth: np.ndarray) -> None:
    depth = np.asarray(depth, dtype=np.float64)
    if depth.ndim != 2:
        raise ValueError(f"depth map must be 2-D, got shape {depth.shape}")
    write_pnm(path, depth)


def read_depth(path: str | os.PathLike) -> np.ndarray:
    depth = read_pnm(path)
    if depth.ndim != 2:
        raise ValueError(f"{path} is not a single-channel PGM depth map")
    return depth
