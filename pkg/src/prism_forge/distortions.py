"""Parametric compound-degradation library.

Seventeen concrete transforms covering geometric, photometric, occlusion,
noise, and resolution degradations.  Each transform has a sampler drawing its
parameters uniformly from documented, physically plausible ranges, and a
deterministic ``apply`` keyed by the per-spec seed, so a sampled spec can be
re-applied (or inverted) bit-identically later.

The 17 transform kinds collapse onto a 14-category label vocabulary:
overexposure/underexposure -> brightness, color_jitter/saturation ->
color_shift, raindrops -> rain; every other kind is its own category.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

import numpy as np
from scipy import ndimage

from .imaging import (
    as_image,
    clamp01,
    convolve2d,
    gaussian_kernel,
    luma,
    perlin_noise,
    resize_to,
    smoothstep,
    upsample_nearest,
    warp,
)
from .rng import child_rng

__all__ = [
    "KINDS",
    "CATEGORIES",
    "KIND_TO_CATEGORY",
    "CATEGORY_INDEX",
    "DistortionSpec",
    "kinds_to_labels",
    "labels_to_multihot",
    "multihot_to_labels",
    "sample_spec",
    "apply",
    "apply_chain",
    "gamma_correct",
    "soft_clip_highlights",
    "compress_shadows",
    "apply_contrast",
    "apply_saturation",
    "rain_layer",
    "snow_layer",
    "cloud_fields",
    "motion_kernel",
    "defocus_sigma",
    "COLOR_CASTS",
]

KINDS: tuple[str, ...] = (
    "motion_blur",
    "elastic_warp",
    "refraction",
    "defocus_blur",
    "low_light",
    "color_jitter",
    "overexposure",
    "underexposure",
    "contrast",
    "saturation",
    "haze",
    "rain",
    "snow",
    "clouds",
    "raindrops",
    "gaussian_noise",
    "pixelation",
)

# 14-category label vocabulary, in canonical order.
CATEGORIES: tuple[str, ...] = (
    "motion_blur",
    "elastic_warp",
    "refraction",
    "defocus_blur",
    "low_light",
    "brightness",
    "color_shift",
    "contrast",
    "haze",
    "rain",
    "snow",
    "clouds",
    "gaussian_noise",
    "pixelation",
)

KIND_TO_CATEGORY: dict[str, str] = {
    "motion_blur": "motion_blur",
    "elastic_warp": "elastic_warp",
    "refraction": "refraction",
    "defocus_blur": "defocus_blur",
    "low_light": "low_light",
    "color_jitter": "color_shift",
    "overexposure": "brightness",
    "underexposure": "brightness",
    "contrast": "contrast",
    "saturation": "color_shift",
    "haze": "haze",
    "rain": "rain",
    "snow": "snow",
    "clouds": "clouds",
    "raindrops": "rain",
    "gaussian_noise": "gaussian_noise",
    "pixelation": "pixelation",
}

CATEGORY_INDEX: dict[str, int] = {c: i for i, c in enumerate(CATEGORIES)}

COLOR_CASTS: dict[str, tuple[float, float, float]] = {
    "warm": (1.0, 0.6, 0.2),
    "cool": (0.2, 0.5, 1.0),
    "green": (0.2, 1.0, 0.2),
    "magenta": (1.0, 0.2, 1.0),
    "cyan": (0.2, 1.0, 1.0),
    "yellow": (1.0, 1.0, 0.2),
}

# Kinds whose apply() requires a depth map.
DEPTH_KINDS = frozenset({"haze", "rain", "snow"})


def kinds_to_labels(kinds: Iterable[str]) -> frozenset[str]:
    """Collapse transform kinds onto the 14-category label set."""
    labels = set()
    for k in kinds:
        if k not in KIND_TO_CATEGORY:
            raise ValueError(f"unknown distortion kind {k!r}")
        labels.add(KIND_TO_CATEGORY[k])
    return frozenset(labels)


def labels_to_multihot(labels: Iterable[str]) -> np.ndarray:
    vec = np.zeros(len(CATEGORIES), dtype=np.float64)
    for lab in labels:
        vec[CATEGORY_INDEX[lab]] = 1.0
    return vec


def multihot_to_labels(vec: np.ndarray) -> frozenset[str]:
    vec = np.asarray(vec)
    return frozenset(CATEGORIES[i] for i in np.nonzero(vec > 0.5)[0])


@dataclass(frozen=True)
class DistortionSpec:
    """One distortion kind plus its sampled parameters.

    ``seed`` keys every procedural field (noise, streaks, drop placement)
    inside apply(), making the transform a pure function of (spec, image,
    depth).
    """

    kind: str
    params: Mapping[str, object] = field(default_factory=dict)
    seed: int = 0

    @property
    def category(self) -> str:
        return KIND_TO_CATEGORY[self.kind]

    def to_json(self) -> dict:
        return {"kind": self.kind, "params": dict(self.params), "seed": int(self.seed)}

    @classmethod
    def from_json(cls, obj: Mapping) -> "DistortionSpec":
        kind = obj.get("kind")
        if kind not in KIND_TO_CATEGORY:
            raise ValueError(f"unknown distortion kind tag {kind!r}")
        return cls(kind=kind, params=dict(obj.get("params", {})), seed=int(obj.get("seed", 0)))

    def __str__(self) -> str:
        return f"{self.kind}({json.dumps(dict(self.params), sort_keys=True)})"


# ---------------------------------------------------------------------------
# Parameter samplers
# ---------------------------------------------------------------------------

def _sample_params(kind: str, rng: np.random.Generator) -> dict:
    u = rng.uniform
    if kind == "motion_blur":
        return {
            "kernel_size": int(rng.integers(5, 11)),
            "direction": str(rng.choice(["horizontal", "vertical", "diag_down", "diag_up"])),
            "depth_mask": bool(rng.random() < 0.5),
            "mask_side": str(rng.choice(["near", "far"])),
            "tau_depth": float(u(0.3, 0.7)),
        }
    if kind == "elastic_warp":
        return {"sigma_smooth": float(u(20.0, 30.0)), "alpha_scale": float(u(10.0, 20.0))}
    if kind == "refraction":
        return {"strength": float(u(20.0, 80.0)), "sigma_smooth": 10.0}
    if kind == "defocus_blur":
        return {"kernel_size": int(rng.choice(np.arange(3, 21, 2)))}
    if kind == "low_light":
        return {"factor": float(u(0.4, 0.9))}
    if kind == "color_jitter":
        return {
            "delta_rgb": [float(u(-0.4, 0.4)) for _ in range(3)],
            "cast": str(rng.choice(sorted(COLOR_CASTS))),
            "cast_intensity": float(u(0.1, 0.3)),
        }
    if kind == "overexposure":
        return {"factor": float(u(1.0, 1.5)), "tau_clip": float(u(0.4, 0.9))}
    if kind == "underexposure":
        return {
            "factor": float(u(0.5, 0.9)),
            "tau_shadow": float(u(0.1, 0.3)),
            "sigma_noise": float(u(0.02, 0.08)),
        }
    if kind == "contrast":
        return {"factor": float(u(0.4, 1.0))}
    if kind == "saturation":
        return {"factor": float(u(0.4, 1.0))}
    if kind == "haze":
        return {"alpha": float(u(0.65, 0.9))}
    if kind == "rain":
        return {
            "kernel_size": int(rng.integers(7, 24)),
            "zoom": float(u(1.0, 3.5)),
            "visibility": float(u(8000.0, 15000.0)),
            "opacity": float(u(0.2, 0.4)),
            "slant_deg": float(u(-20.0, 20.0)),
        }
    if kind == "snow":
        return {"visibility": float(u(10000.0, 20000.0))}
    if kind == "clouds":
        return {
            "opacity": float(u(0.7, 1.0)),
            "shadow": float(u(0.2, 0.7)),
            "blur_scale": float(u(1.0, 3.0)),
        }
    if kind == "raindrops":
        n = int(rng.integers(20, 61))
        return {
            "count": n,
            "radii": [float(u(3.0, 50.0)) for _ in range(n)],
            "edge_darken": float(u(0.4, 0.8)),
        }
    if kind == "gaussian_noise":
        if rng.random() < 0.5:
            return {"mode": "gaussian", "sigma": float(u(0.05, 0.1))}
        return {"mode": "salt_pepper", "corruption_pct": float(u(2.0, 8.0))}
    if kind == "pixelation":
        return {"factor": float(u(2.0, 4.0))}
    raise ValueError(f"unknown distortion kind {kind!r}")


def sample_spec(kind: str, rng: np.random.Generator) -> DistortionSpec:
    """Draw a spec with every parameter uniform in its documented range."""
    params = _sample_params(kind, rng)
    seed = int(rng.integers(0, 2**63 - 1))
    return DistortionSpec(kind=kind, params=params, seed=seed)


# ---------------------------------------------------------------------------
# Photometric building blocks (shared with the restoration inverses)
# ---------------------------------------------------------------------------

def gamma_correct(image: np.ndarray, gamma: float) -> np.ndarray:
    """Power-law intensity map I**gamma."""
    return clamp01(np.power(np.clip(image, 0.0, 1.0), gamma))


def soft_clip_highlights(values: np.ndarray, tau: float) -> np.ndarray:
    """Smoothly compress values above tau toward 1 (invertible below 1)."""
    v = np.asarray(values, dtype=np.float64)
    out = v.copy()
    hi = v > tau
    out[hi] = tau + (1.0 - tau) * (1.0 - np.exp(-(v[hi] - tau) / (1.0 - tau)))
    return out


def invert_soft_clip(values: np.ndarray, tau: float) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    out = v.copy()
    hi = v > tau
    frac = np.clip((v[hi] - tau) / (1.0 - tau), 0.0, 1.0 - 1e-12)
    out[hi] = tau - (1.0 - tau) * np.log1p(-frac)
    return out


def compress_shadows(values: np.ndarray, tau: float) -> np.ndarray:
    """Quadratic shadow crush below tau: v -> v^2 / tau."""
    v = np.asarray(values, dtype=np.float64)
    out = v.copy()
    lo = v < tau
    out[lo] = v[lo] ** 2 / tau
    return out


def expand_shadows(values: np.ndarray, tau: float) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    out = v.copy()
    lo = v < tau
    out[lo] = np.sqrt(np.clip(v[lo], 0.0, None) * tau)
    return out


def apply_contrast(image: np.ndarray, factor: float) -> np.ndarray:
    """Scale deviations around mid-gray; factor 1 is identity."""
    return clamp01(0.5 + factor * (np.asarray(image, dtype=np.float64) - 0.5))


def apply_saturation(image: np.ndarray, factor: float) -> np.ndarray:
    """Scale chroma around Rec.601 luma (which is preserved exactly)."""
    img = as_image(image)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError("saturation requires a 3-channel image")
    lum = luma(img)[:, :, None]
    return clamp01(lum + factor * (img - lum))


def defocus_sigma(kernel_size: int) -> float:
    """Gaussian sigma for a given odd kernel size (OpenCV convention)."""
    return 0.3 * ((kernel_size - 1) * 0.5 - 1.0) + 0.8


def motion_kernel(kernel_size: int, direction: str) -> np.ndarray:
    """Normalized line kernel of ``kernel_size`` taps along one of four axes.

    The array is padded to odd side length when the tap count is even, so it
    stays convolvable; the line length (blur extent) is exact either way.
    """
    k = int(kernel_size)
    size = k if k % 2 == 1 else k + 1
    kern = np.zeros((size, size), dtype=np.float64)
    mid = size // 2
    if direction == "horizontal":
        kern[mid, :k] = 1.0
    elif direction == "vertical":
        kern[:k, mid] = 1.0
    elif direction == "diag_down":
        kern[np.arange(k), np.arange(k)] = 1.0
    elif direction == "diag_up":
        kern[np.arange(k), size - 1 - np.arange(k)] = 1.0
    else:
        raise ValueError(f"unknown motion direction {direction!r}")
    return kern / kern.sum()


# ---------------------------------------------------------------------------
# Procedural occlusion layers (also regenerated by the oracle inverses)
# ---------------------------------------------------------------------------

def _streaks_at_scale(
    h: int,
    w: int,
    zoom: float,
    kernel_size: int,
    slant_deg: float,
    density: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Directional streak mask: thresholded noise motion-blurred along slant."""
    hs = max(2, int(round(h / zoom)))
    ws = max(2, int(round(w / zoom)))
    noise = rng.random((hs, ws))
    seeds = (noise > 1.0 - density).astype(np.float64)
    k = max(3, int(kernel_size) | 1)
    kern = np.zeros((k, k), dtype=np.float64)
    mid = k // 2
    slant = np.deg2rad(slant_deg)
    for i in range(k):
        t = i - mid
        x = mid + int(round(np.tan(slant) * t))
        if 0 <= x < k:
            kern[i, x] = 1.0
    kern /= kern.sum()
    streaks = ndimage.convolve(seeds, kern * k * 0.9, mode="constant")
    streaks = np.clip(streaks, 0.0, 1.0)
    if (hs, ws) != (h, w):
        streaks = np.clip(resize_to(streaks, h, w), 0.0, 1.0)
    return streaks


def rain_layer(h: int, w: int, params: Mapping, seed: int) -> np.ndarray:
    """Two-scale screen-combined rain streak layer in [0, 1]."""
    rng = child_rng(seed, 1)
    k = int(params["kernel_size"])
    zoom = float(params["zoom"])
    slant = float(params.get("slant_deg", 0.0))
    near = _streaks_at_scale(h, w, zoom, k, slant, density=0.012, rng=rng)
    far = _streaks_at_scale(h, w, 1.0, max(5, k // 2), slant, density=0.008, rng=rng)
    return 1.0 - (1.0 - near) * (1.0 - far)


def snow_layer(h: int, w: int, seed: int) -> np.ndarray:
    """Multi-scale round-flake layer in [0, 1]."""
    rng = child_rng(seed, 1)
    layer = np.zeros((h, w), dtype=np.float64)
    for scale, density in ((1.0, 0.004), (2.0, 0.006), (3.5, 0.008)):
        hs = max(2, int(round(h / scale)))
        ws = max(2, int(round(w / scale)))
        seeds = (rng.random((hs, ws)) > 1.0 - density).astype(np.float64)
        flakes = ndimage.gaussian_filter(seeds, sigma=0.7, mode="constant")
        flakes = np.clip(flakes * 6.0, 0.0, 1.0)
        if (hs, ws) != (h, w):
            flakes = np.clip(resize_to(flakes, h, w), 0.0, 1.0)
        layer = 1.0 - (1.0 - layer) * (1.0 - flakes)
    return layer


def _fog_alpha(depth: np.ndarray, percentile: float, visibility: float) -> np.ndarray:
    """Depth-gated fog opacity: only pixels beyond the depth percentile fog up."""
    q = np.percentile(depth, percentile)
    gate = smoothstep(depth, q, min(1.0, q + 0.1) + 1e-9)
    return gate * (1.0 - np.exp(-4000.0 * depth / visibility))


def cloud_fields(h: int, w: int, params: Mapping, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """(cloud mask, shadow mask) from one smooth noise field."""
    rng = child_rng(seed, 1)
    cell = max(4.0, min(h, w) / 6.0 * float(params["blur_scale"]))
    p = perlin_noise(h, w, cell, rng)
    cloud = smoothstep(p, 0.55, 0.8)
    shade = smoothstep(p, 0.35, 0.65)
    return cloud, shade


# ---------------------------------------------------------------------------
# apply()
# ---------------------------------------------------------------------------

def _need_rgb(img: np.ndarray, kind: str) -> None:
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"{kind} requires a 3-channel image")


def _apply_motion_blur(img, depth, params, rng):
    kern = motion_kernel(int(params["kernel_size"]), str(params["direction"]))
    blurred = convolve2d(img, kern)
    if params.get("depth_mask") and depth is not None:
        tau = float(params["tau_depth"])
        # depth 1 = farthest; "near" blurs the foreground band
        mask = 1.0 - smoothstep(depth, tau - 0.05, tau + 0.05)
        if params.get("mask_side") == "far":
            mask = 1.0 - mask
        m = mask if img.ndim == 2 else mask[:, :, None]
        return clamp01(m * blurred + (1.0 - m) * img)
    return blurred


def _smooth_field(h, w, sigma, rng):
    return ndimage.gaussian_filter(rng.uniform(-1.0, 1.0, (h, w)), sigma=sigma, mode="reflect")


def _apply_elastic(img, depth, params, rng):
    h, w = img.shape[:2]
    sigma = float(params["sigma_smooth"])
    alpha = float(params["alpha_scale"])
    dx = _smooth_field(h, w, sigma, rng) * alpha
    dy = _smooth_field(h, w, sigma, rng) * alpha
    return warp(img, dx, dy)


def _apply_refraction(img, depth, params, rng):
    h, w = img.shape[:2]
    sigma = float(params.get("sigma_smooth", 10.0))
    strength = float(params["strength"])
    dx = _smooth_field(h, w, sigma, rng) * strength
    dy = _smooth_field(h, w, sigma, rng) * strength
    return warp(img, dx, dy)


def _apply_defocus(img, depth, params, rng):
    k = int(params["kernel_size"])
    return convolve2d(img, gaussian_kernel(defocus_sigma(k), k))


def _apply_low_light(img, depth, params, rng):
    return clamp01(img * float(params["factor"]))


def _apply_color_jitter(img, depth, params, rng):
    _need_rgb(img, "color_jitter")
    delta = np.asarray(params["delta_rgb"], dtype=np.float64)
    out = img + delta[None, None, :]
    tint = np.asarray(COLOR_CASTS[str(params["cast"])], dtype=np.float64)
    a = float(params["cast_intensity"])
    out = out * (1.0 - a * (1.0 - tint))[None, None, :]
    return clamp01(out)


def _apply_overexposure(img, depth, params, rng):
    f = float(params["factor"])
    tau = float(params["tau_clip"])
    g = gamma_correct(img, 1.0 / f)
    boosted = g * (1.0 + 0.25 * (f - 1.0))
    return clamp01(soft_clip_highlights(boosted, tau))


def _apply_underexposure(img, depth, params, rng):
    f = float(params["factor"])
    tau = float(params["tau_shadow"])
    sigma = float(params["sigma_noise"])
    g = gamma_correct(img, 1.0 / f)
    g = compress_shadows(g, tau)
    weight = 1.0 - luma(g)
    noise = rng.standard_normal(g.shape)
    w = weight if g.ndim == 2 else weight[:, :, None]
    return clamp01(g + sigma * w * noise)


def _apply_contrast_kind(img, depth, params, rng):
    return apply_contrast(img, float(params["factor"]))


def _apply_saturation_kind(img, depth, params, rng):
    return apply_saturation(img, float(params["factor"]))


def _apply_haze(img, depth, params, rng):
    alpha = float(params["alpha"])
    d = depth if img.ndim == 2 else depth[:, :, None]
    return clamp01(img * (1.0 - d * alpha) + d * alpha)


def _apply_rain(img, depth, params, rng):
    h, w = img.shape[:2]
    layer = rain_layer(h, w, params, int(rng.integers(0, 2**62)))
    opacity = float(params["opacity"])
    lay = layer if img.ndim == 2 else layer[:, :, None]
    out = 1.0 - (1.0 - img) * (1.0 - opacity * lay)
    fog = _fog_alpha(depth, 90.0, float(params["visibility"]))
    fogc = fog if img.ndim == 2 else fog[:, :, None]
    return clamp01(out * (1.0 - fogc) + fogc)


def _apply_snow(img, depth, params, rng):
    h, w = img.shape[:2]
    layer = snow_layer(h, w, int(rng.integers(0, 2**62)))
    lay = layer if img.ndim == 2 else layer[:, :, None]
    out = 1.0 - (1.0 - img) * (1.0 - 0.85 * lay)
    fog = _fog_alpha(depth, 95.0, float(params["visibility"]))
    fogc = fog if img.ndim == 2 else fog[:, :, None]
    return clamp01(out * (1.0 - fogc) + fogc)


def _apply_clouds(img, depth, params, rng):
    h, w = img.shape[:2]
    cloud, shade = cloud_fields(h, w, params, int(rng.integers(0, 2**62)))
    opacity = float(params["opacity"])
    shadow = float(params["shadow"])
    c = cloud if img.ndim == 2 else cloud[:, :, None]
    s = shade if img.ndim == 2 else shade[:, :, None]
    out = img * (1.0 - shadow * s * (1.0 - c))
    return clamp01(out * (1.0 - opacity * c) + opacity * c)


def _apply_raindrops(img, depth, params, rng):
    h, w = img.shape[:2]
    out = img.copy()
    darken = float(params["edge_darken"])
    radii = list(params["radii"])[: int(params["count"])]
    for r in radii:
        cy = rng.uniform(0, h)
        cx = rng.uniform(0, w)
        y0, y1 = max(0, int(cy - r)), min(h, int(cy + r) + 1)
        x0, x1 = max(0, int(cx - r)), min(w, int(cx + r) + 1)
        if y0 >= y1 or x0 >= x1:
            continue
        yy, xx = np.meshgrid(np.arange(y0, y1, dtype=np.float64), np.arange(x0, x1, dtype=np.float64), indexing="ij")
        rho = np.hypot(yy - cy, xx - cx)
        inside = rho < r
        if not inside.any():
            continue
        # radial magnification: sample closer to the drop center
        scale = np.where(inside, rho / r, 1.0)
        sy = np.clip(cy + (yy - cy) * scale, 0, h - 1)
        sx = np.clip(cx + (xx - cx) * scale, 0, w - 1)
        iy = np.rint(sy).astype(np.intp)
        ix = np.rint(sx).astype(np.intp)
        patch = out[iy, ix]
        ring = inside & (rho > 0.82 * r)
        ringf = ring.astype(np.float64) * darken
        if out.ndim == 3:
            patch = patch * (1.0 - ringf[:, :, None])
            region = out[y0:y1, x0:x1]
            out[y0:y1, x0:x1] = np.where(inside[:, :, None], patch, region)
        else:
            patch = patch * (1.0 - ringf)
            region = out[y0:y1, x0:x1]
            out[y0:y1, x0:x1] = np.where(inside, patch, region)
    return clamp01(out)


def _apply_gaussian_noise(img, depth, params, rng):
    if params["mode"] == "gaussian":
        sigma = float(params["sigma"])
        return clamp01(img + sigma * rng.standard_normal(img.shape))
    pct = float(params["corruption_pct"]) / 100.0
    h, w = img.shape[:2]
    mask = rng.random((h, w)) < pct
    salt = rng.random((h, w)) < 0.5
    out = img.copy()
    fill = np.where(salt, 1.0, 0.0)
    if out.ndim == 3:
        out[mask] = fill[mask][:, None]
    else:
        out[mask] = fill[mask]
    return clamp01(out)


def _apply_pixelation(img, depth, params, rng):
    # bicubic downsample, then blocky (nearest) replication back to size
    s = float(params["factor"])
    h, w = img.shape[:2]
    dh = max(1, int(round(h / s)))
    dw = max(1, int(round(w / s)))
    small = resize_to(img, dh, dw)
    return upsample_nearest(small, h, w)


_APPLY_FNS: dict[str, Callable] = {
    "motion_blur": _apply_motion_blur,
    "elastic_warp": _apply_elastic,
    "refraction": _apply_refraction,
    "defocus_blur": _apply_defocus,
    "low_light": _apply_low_light,
    "color_jitter": _apply_color_jitter,
    "overexposure": _apply_overexposure,
    "underexposure": _apply_underexposure,
    "contrast": _apply_contrast_kind,
    "saturation": _apply_saturation_kind,
    "haze": _apply_haze,
    "rain": _apply_rain,
    "snow": _apply_snow,
    "clouds": _apply_clouds,
    "raindrops": _apply_raindrops,
    "gaussian_noise": _apply_gaussian_noise,
    "pixelation": _apply_pixelation,
}


def apply(spec: DistortionSpec, image: np.ndarray, depth: np.ndarray | None = None) -> np.ndarray:
    """Apply one distortion.  Pure function of (spec, image, depth).

    All procedural randomness inside the transform derives from ``spec.seed``.
    Depth is required for haze/rain/snow and for depth-masked motion blur.
    """
    img = as_image(image)
    if spec.kind not in _APPLY_FNS:
        raise ValueError(f"unknown distortion kind {spec.kind!r}")
    needs_depth = spec.kind in DEPTH_KINDS
    if needs_depth and depth is None:
        raise ValueError(f"{spec.kind} requires a depth map")
    if depth is not None:
        depth = np.asarray(depth, dtype=np.float64)
        if depth.shape != img.shape[:2]:
            raise ValueError(f"depth dims {depth.shape} do not match image {img.shape[:2]}")
    rng = child_rng(spec.seed)
    return _APPLY_FNS[spec.kind](img, depth, spec.params, rng)


def apply_chain(
    specs: list[DistortionSpec], image: np.ndarray, depth: np.ndarray | None = None
) -> np.ndarray:
    """Left-fold of apply() in the given order (order is never normalized)."""
    if not specs:
        raise ValueError("apply_chain requires at least one spec")
    out = as_image(image)
    for spec in specs:
        out = apply(spec, out, depth)
    return out
