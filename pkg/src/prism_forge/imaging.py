"""Deterministic raster primitives shared by every pipeline stage.

Images are plain numpy arrays: shape (H, W) or (H, W, C) with C in {1, 3},
dtype float64, intensities in [0, 1].  Depth maps are (H, W) float64 in
[0, 1] with 1 = farthest.  Public operations clamp their output into [0, 1]
(except depth/displacement utilities, which document their own ranges).
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

__all__ = [
    "clamp01",
    "as_image",
    "luma",
    "gaussian_kernel",
    "convolve2d",
    "warp",
    "perlin_noise",
    "resize",
    "resize_to",
    "upsample_nearest",
    "smoothstep",
]


def clamp01(image: np.ndarray) -> np.ndarray:
    """Clip intensities into [0, 1] (the write barrier for every public op)."""
    return np.clip(image, 0.0, 1.0)


def as_image(arr) -> np.ndarray:
    """Validate + canonicalize an image array: float64, (H,W) or (H,W,{1,3})."""
    img = np.asarray(arr, dtype=np.float64)
    if img.ndim == 2:
        pass
    elif img.ndim == 3 and img.shape[2] in (1, 3):
        pass
    else:
        raise ValueError(f"expected (H,W) or (H,W,1|3) image, got shape {img.shape}")
    if img.size == 0:
        raise ValueError("empty image")
    return img


def luma(image: np.ndarray) -> np.ndarray:
    """Rec.601 luminance; identity for single-channel input."""
    img = as_image(image)
    if img.ndim == 2:
        return img
    if img.shape[2] == 1:
        return img[:, :, 0]
    return 0.299 * img[:, :, 0] + 0.587 * img[:, :, 1] + 0.114 * img[:, :, 2]


def gaussian_kernel(sigma: float, size: int) -> np.ndarray:
    """Normalized 2-D Gaussian kernel of odd side length ``size``.

    Entries sum to 1 within 1e-12 and the kernel is symmetric under 180-degree
    rotation.
    """
    if size < 1 or size % 2 == 0:
        raise ValueError(f"kernel size must be odd and >= 1, got {size}")
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    half = size // 2
    coords = np.arange(-half, half + 1, dtype=np.float64)
    g1 = np.exp(-(coords**2) / (2.0 * sigma * sigma))
    kernel = np.outer(g1, g1)
    return kernel / kernel.sum()


def _convolve_plane(plane: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    return ndimage.convolve(plane, kernel, mode="reflect")


def convolve2d(image: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """2-D convolution with reflected edges, per channel.

    Output dims equal input dims; a kernel summing to 1 preserves constants.
    """
    img = as_image(image)
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.ndim != 2 or kernel.shape[0] % 2 == 0 or kernel.shape[1] % 2 == 0:
        raise ValueError(f"kernel must be odd-sized 2-D, got shape {kernel.shape}")
    if img.ndim == 2:
        return clamp01(_convolve_plane(img, kernel))
    out = np.empty_like(img)
    for c in range(img.shape[2]):
        out[:, :, c] = _convolve_plane(img[:, :, c], kernel)
    return clamp01(out)


def warp(image: np.ndarray, dx: np.ndarray, dy: np.ndarray) -> np.ndarray:
    """Pull-warp with bilinear sampling and edge clamping.

    Output pixel (y, x) samples the input at (y + dy[y,x], x + dx[y,x]);
    out-of-bounds coordinates clamp to the nearest edge pixel.  A zero field
    is an exact identity.
    """
    img = as_image(image)
    dx = np.asarray(dx, dtype=np.float64)
    dy = np.asarray(dy, dtype=np.float64)
    h, w = img.shape[:2]
    if dx.shape != (h, w) or dy.shape != (h, w):
        raise ValueError(f"field dims {dx.shape}/{dy.shape} do not match image {(h, w)}")
    if not (np.isfinite(dx).all() and np.isfinite(dy).all()):
        raise ValueError("displacement field contains non-finite values")
    if not dx.any() and not dy.any():
        return img.copy()
    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    coords = np.stack([yy + dy, xx + dx])
    if img.ndim == 2:
        return clamp01(ndimage.map_coordinates(img, coords, order=1, mode="nearest"))
    out = np.empty_like(img)
    for c in range(img.shape[2]):
        out[:, :, c] = ndimage.map_coordinates(img[:, :, c], coords, order=1, mode="nearest")
    return clamp01(out)


def _fade(t: np.ndarray) -> np.ndarray:
    return t * t * t * (t * (t * 6.0 - 15.0) + 10.0)


def perlin_noise(height: int, width: int, scale: float, rng: np.random.Generator) -> np.ndarray:
    """Single-octave gradient (Perlin) noise in [0, 1].

    ``scale`` is the lattice cell size in pixels; larger scales give smoother
    fields.  With scale >= max(height, width) the whole image falls inside a
    single cell.  Deterministic for a fixed generator state.
    """
    if height < 1 or width < 1:
        raise ValueError("image dims must be positive")
    if scale < 1:
        raise ValueError(f"scale must be >= 1, got {scale}")
    cells_y = int(np.ceil(height / scale)) + 1
    cells_x = int(np.ceil(width / scale)) + 1
    angles = rng.uniform(0.0, 2.0 * np.pi, size=(cells_y + 1, cells_x + 1))
    grad_y = np.sin(angles)
    grad_x = np.cos(angles)

    ys = np.arange(height, dtype=np.float64) / scale
    xs = np.arange(width, dtype=np.float64) / scale
    u, v = np.meshgrid(ys, xs, indexing="ij")
    iy = np.floor(u).astype(np.intp)
    ix = np.floor(v).astype(np.intp)
    fy = u - iy
    fx = v - ix

    def dot_corner(oy: int, ox: int) -> np.ndarray:
        gy = grad_y[iy + oy, ix + ox]
        gx = grad_x[iy + oy, ix + ox]
        return gy * (fy - oy) + gx * (fx - ox)

    wy = _fade(fy)
    wx = _fade(fx)
    n0 = dot_corner(0, 0) * (1 - wx) + dot_corner(0, 1) * wx
    n1 = dot_corner(1, 0) * (1 - wx) + dot_corner(1, 1) * wx
    value = n0 * (1 - wy) + n1 * wy
    # 2-D Perlin with unit gradients lies in [-sqrt(2)/2, sqrt(2)/2]
    return clamp01(0.5 + value / np.sqrt(2.0))


def _cubic_weights(t: np.ndarray) -> np.ndarray:
    """Keys cubic convolution kernel (a = -0.5) at distances |t| in [0, 2)."""
    a = -0.5
    t = np.abs(t)
    w = np.zeros_like(t)
    inner = t <= 1.0
    outer = (t > 1.0) & (t < 2.0)
    ti = t[inner]
    to = t[outer]
    w[inner] = (a + 2.0) * ti**3 - (a + 3.0) * ti**2 + 1.0
    w[outer] = a * to**3 - 5.0 * a * to**2 + 8.0 * a * to - 4.0 * a
    return w


def _resample_axis(values: np.ndarray, out_len: int, axis: int) -> np.ndarray:
    """Separable bicubic resample along one axis with edge clamping."""
    in_len = values.shape[axis]
    if out_len == in_len:
        return values
    # pixel-center mapping: dst x -> src (x + 0.5) * in/out - 0.5
    src = (np.arange(out_len, dtype=np.float64) + 0.5) * (in_len / out_len) - 0.5
    base = np.floor(src).astype(np.intp)
    frac = src - base
    moved = np.moveaxis(values, axis, 0)
    out = np.zeros((out_len,) + moved.shape[1:], dtype=np.float64)
    for k in range(-1, 3):
        idx = np.clip(base + k, 0, in_len - 1)
        w = _cubic_weights(frac - k)
        out += w.reshape((-1,) + (1,) * (moved.ndim - 1)) * moved[idx]
    return np.moveaxis(out, 0, axis)


def resize_to(image: np.ndarray, height: int, width: int) -> np.ndarray:
    """Bicubic resample to exact target dims (Keys kernel, a = -0.5)."""
    img = as_image(image)
    if height < 1 or width < 1:
        raise ValueError(f"target dims must be >= 1, got {(height, width)}")
    out = _resample_axis(img, height, axis=0)
    out = _resample_axis(out, width, axis=1)
    return clamp01(out)


def resize(image: np.ndarray, factor: float) -> np.ndarray:
    """Bicubic resize by a positive scale factor (1.0 is an exact identity)."""
    img = as_image(image)
    if factor <= 0:
        raise ValueError(f"factor must be positive, got {factor}")
    h = int(round(img.shape[0] * factor))
    w = int(round(img.shape[1] * factor))
    if h < 1 or w < 1:
        raise ValueError(f"resize factor {factor} collapses dims {img.shape[:2]}")
    if (h, w) == img.shape[:2]:
        return img.copy()
    return resize_to(img, h, w)


def upsample_nearest(image: np.ndarray, height: int, width: int) -> np.ndarray:
    """Nearest-neighbor (block-replication) upsample to exact target dims."""
    img = as_image(image)
    dh, dw = img.shape[:2]
    iy = np.minimum(np.arange(height) * dh // height, dh - 1)
    ix = np.minimum(np.arange(width) * dw // width, dw - 1)
    return img[np.ix_(iy, ix)]


def smoothstep(x: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Cubic ramp: 0 below lo, 1 above hi, smooth in between."""
    t = np.clip((x - lo) / (hi - lo), 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)
