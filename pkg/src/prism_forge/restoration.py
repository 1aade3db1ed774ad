"""Prompt-conditioned restoration with classical inverse operators.

Planning covers exactly the intersection of the requested categories and the
categories present in the image (so negative prompts produce an empty plan
and a bit-identical output).  Each category has a registered inverse in two
flavors: an oracle path that inverts the true forward parameters recorded in
a dataset manifest, and a blind path driven by cheap estimates.

Composite plans run in a fixed canonical order: occlusions, photometric,
blur/noise, geometric, resolution.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import fft, ndimage

from .distortions import (
    CATEGORIES,
    DistortionSpec,
    KIND_TO_CATEGORY,
    cloud_fields,
    defocus_sigma,
    expand_shadows,
    gamma_correct,
    invert_soft_clip,
    motion_kernel,
    rain_layer,
    snow_layer,
)
from .imaging import as_image, clamp01, convolve2d, gaussian_kernel, luma, resize_to
from .prompts import RestorationRequest

__all__ = [
    "CANONICAL_ORDER",
    "RestorationPlan",
    "PlanStep",
    "plan",
    "invert",
    "restore",
    "auto_restore",
]

# occlusions -> photometric -> blur/noise -> geometric -> resolution
CANONICAL_ORDER: tuple[str, ...] = (
    "clouds",
    "haze",
    "rain",
    "snow",
    "brightness",
    "low_light",
    "contrast",
    "color_shift",
    "defocus_blur",
    "motion_blur",
    "gaussian_noise",
    "elastic_warp",
    "refraction",
    "pixelation",
)


@dataclass(frozen=True)
class PlanStep:
    category: str
    op: str  # oracle | blind | noop
    hints: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        hints = {}
        if self.hints.get("specs"):
            hints["specs"] = [s.to_json() for s in self.hints["specs"]]
        return {"category": self.category, "op": self.op, "hints": hints}


@dataclass(frozen=True)
class RestorationPlan:
    steps: tuple
    mode: str  # composite | sequential
    source: str  # manual | automated

    @property
    def categories(self) -> tuple:
        return tuple(s.category for s in self.steps)

    def to_json(self) -> dict:
        return {
            "mode": self.mode,
            "source": self.source,
            "steps": [s.to_json() for s in self.steps],
        }


def plan(
    request: RestorationRequest,
    present,
    mode: str = "composite",
    known_specs=None,
    source: str = "manual",
) -> RestorationPlan:
    """Build a restoration plan covering ``targets & present`` only.

    Composite mode orders steps canonically; sequential mode preserves the
    order in which categories appear in the request's surface ordering
    (canonical order of the target set, one step per call site).
    """
    if mode not in ("composite", "sequential"):
        raise ValueError(f"unknown plan mode {mode!r}")
    present = frozenset(present)
    actionable = request.targets & present
    cats = [c for c in CANONICAL_ORDER if c in actionable]
    by_cat: dict[str, list[DistortionSpec]] = {}
    for spec in known_specs or ():
        by_cat.setdefault(KIND_TO_CATEGORY[spec.kind], []).append(spec)
    steps = []
    for c in cats:
        specs = by_cat.get(c)
        if specs:
            steps.append(PlanStep(c, "oracle", {"specs": tuple(specs)}))
        elif c in ("elastic_warp", "refraction"):
            # no blind inverse for geometric warps; planned as explicit no-ops
            steps.append(PlanStep(c, "noop", {}))
        else:
            steps.append(PlanStep(c, "blind", {}))
    return RestorationPlan(tuple(steps), mode, source)


# ---------------------------------------------------------------------------
# Inverse operators
# ---------------------------------------------------------------------------

def _dct_deconv(image: np.ndarray, kernel: np.ndarray, balance: float = 1e-6) -> np.ndarray:
    """Regularized deconvolution under reflexive boundary conditions.

    For a doubly symmetric kernel, convolution with scipy's "reflect" mode is
    diagonalized exactly by the orthonormal DCT-II, so the inverse uses the
    true boundary model and a noiseless blur inverts almost exactly.
    """
    img = as_image(image)
    h, w = img.shape[:2]
    e1 = np.zeros((h, w))
    e1[0, 0] = 1.0
    lam = fft.dctn(ndimage.convolve(e1, kernel, mode="reflect"), norm="ortho") / fft.dctn(e1, norm="ortho")

    def deconv_plane(plane: np.ndarray) -> np.ndarray:
        coeff = fft.dctn(plane, norm="ortho")
        return fft.idctn(coeff * lam / (lam * lam + balance), norm="ortho")

    if img.ndim == 2:
        return clamp01(deconv_plane(img))
    out = np.empty_like(img)
    for c in range(img.shape[2]):
        out[:, :, c] = deconv_plane(img[:, :, c])
    return clamp01(out)


def _wiener_deconv(image: np.ndarray, kernel: np.ndarray, balance: float = 2e-3) -> np.ndarray:
    """Frequency-domain regularized inverse filter with reflect padding.

    Fallback for kernels that are not doubly symmetric (even-tap motion
    lines), where the DCT diagonalization does not hold.
    """
    img = as_image(image)
    h, w = img.shape[:2]
    pad = 2 * max(kernel.shape)
    kh, kw = kernel.shape

    def deconv_plane(plane: np.ndarray) -> np.ndarray:
        padded = np.pad(plane, pad, mode="reflect")
        ph, pw = padded.shape
        kpad = np.zeros((ph, pw))
        kpad[:kh, :kw] = kernel
        kpad = np.roll(kpad, (-(kh // 2), -(kw // 2)), axis=(0, 1))
        K = np.fft.rfft2(kpad)
        P = np.fft.rfft2(padded)
        est = P * np.conj(K) / (np.abs(K) ** 2 + balance)
        out = np.fft.irfft2(est, s=(ph, pw))
        return out[pad : pad + h, pad : pad + w]

    if img.ndim == 2:
        return clamp01(deconv_plane(img))
    out = np.empty_like(img)
    for c in range(img.shape[2]):
        out[:, :, c] = deconv_plane(img[:, :, c])
    return clamp01(out)


def _spectral_denoise(image: np.ndarray, sigma: float) -> np.ndarray:
    """Per-frequency Wiener shrinkage with known noise level."""
    img = as_image(image)

    def plane(p: np.ndarray) -> np.ndarray:
        F = np.fft.fft2(p, norm="ortho")
        power = np.abs(F) ** 2
        gain = np.maximum(power - sigma**2, 0.0) / np.maximum(power, 1e-12)
        return np.real(np.fft.ifft2(gain * F, norm="ortho"))

    if img.ndim == 2:
        return clamp01(plane(img))
    out = np.empty_like(img)
    for c in range(img.shape[2]):
        out[:, :, c] = plane(img[:, :, c])
    return clamp01(out)


def _is_doubly_symmetric(kernel: np.ndarray) -> bool:
    return np.allclose(kernel, np.rot90(kernel, 2), atol=1e-12)


def _unsharp(image: np.ndarray, sigma: float = 1.2, amount: float = 0.8) -> np.ndarray:
    img = as_image(image)
    blurred = ndimage.gaussian_filter(img, sigma=(sigma, sigma, 0)[: img.ndim], mode="reflect")
    return clamp01(img + amount * (img - blurred))


def _median(image: np.ndarray, size: int = 3) -> np.ndarray:
    img = as_image(image)
    if img.ndim == 2:
        return ndimage.median_filter(img, size=size, mode="reflect")
    out = np.empty_like(img)
    for c in range(img.shape[2]):
        out[:, :, c] = ndimage.median_filter(img[:, :, c], size=size, mode="reflect")
    return out


def _estimate_noise_sigma(image: np.ndarray) -> float:
    """Robust noise estimate from the median absolute Laplacian deviation."""
    g = luma(image)
    lap = ndimage.laplace(g, mode="reflect")
    return float(np.median(np.abs(lap - np.median(lap))) / 0.6745 / np.sqrt(20.0))


def _screen_unblend(image: np.ndarray, layer: np.ndarray, opacity: float) -> np.ndarray:
    lay = layer if image.ndim == 2 else layer[:, :, None]
    denom = np.maximum(1.0 - opacity * lay, 1e-3)
    return clamp01(1.0 - (1.0 - image) / denom)


def _unfog(image: np.ndarray, fog: np.ndarray) -> np.ndarray:
    f = fog if image.ndim == 2 else fog[:, :, None]
    denom = np.maximum(1.0 - f, 1e-3)
    return clamp01((image - f) / denom)


def _fog_alpha_for(spec: DistortionSpec, depth: np.ndarray, percentile: float) -> np.ndarray:
    from .distortions import _fog_alpha

    return _fog_alpha(depth, percentile, float(spec.params["visibility"]))


def _invert_brightness_spec(image: np.ndarray, spec: DistortionSpec) -> np.ndarray:
    if spec.kind == "overexposure":
        f = float(spec.params["factor"])
        tau = float(spec.params["tau_clip"])
        out = invert_soft_clip(image, tau)
        out = out / (1.0 + 0.25 * (f - 1.0))
        return gamma_correct(out, f)
    if spec.kind == "underexposure":
        f = float(spec.params["factor"])
        tau = float(spec.params["tau_shadow"])
        out = expand_shadows(image, tau)
        return gamma_correct(out, f)
    raise ValueError(f"not a brightness kind: {spec.kind}")


def _invert_color_spec(image: np.ndarray, spec: DistortionSpec) -> np.ndarray:
    from .distortions import COLOR_CASTS, apply_saturation

    if spec.kind == "saturation":
        s = float(spec.params["factor"])
        return apply_saturation(image, 1.0 / s)
    if spec.kind == "color_jitter":
        delta = np.asarray(spec.params["delta_rgb"], dtype=np.float64)
        tint = np.asarray(COLOR_CASTS[str(spec.params["cast"])], dtype=np.float64)
        a = float(spec.params["cast_intensity"])
        out = image / (1.0 - a * (1.0 - tint))[None, None, :]
        return clamp01(out - delta[None, None, :])
    raise ValueError(f"not a color kind: {spec.kind}")


def _oracle_specs(hints: dict) -> list[DistortionSpec]:
    return list(hints.get("specs", ()))


def invert(category: str, image: np.ndarray, hints: dict | None = None, depth: np.ndarray | None = None) -> np.ndarray:
    """Apply the registered inverse for one category.

    ``hints`` may carry the true forward specs (oracle mode) under "specs";
    otherwise parameters are estimated from the image.  Output is clamped to
    [0, 1] and deterministic.
    """
    img = as_image(image)
    hints = hints or {}
    specs = _oracle_specs(hints)
    if category not in CATEGORIES:
        raise ValueError(f"no registered inverse for category {category!r}")

    if category == "low_light":
        if specs:
            f = float(specs[-1].params["factor"])
        else:
            f = float(np.clip(np.percentile(img, 99.0), 0.05, 1.0))
        return clamp01(img / f)

    if category == "haze":
        if specs and depth is not None:
            out = img
            for spec in reversed(specs):
                alpha = float(spec.params["alpha"])
                d = depth if out.ndim == 2 else depth[:, :, None]
                t = np.maximum(1.0 - d * alpha, 1e-3)
                out = clamp01((out - d * alpha) / t)
            return out
        # blind: global airlight at the bright end, depth-free transmission
        a = float(np.percentile(img, 99.5))
        dark = img.min(axis=2) if img.ndim == 3 else img
        t = np.maximum(1.0 - 0.85 * dark / max(a, 1e-3), 0.1)
        tc = t if img.ndim == 2 else t[:, :, None]
        return clamp01((img - a) / tc + a)

    if category == "brightness":
        if specs:
            out = img
            for spec in reversed(specs):
                out = _invert_brightness_spec(out, spec)
            return clamp01(out)
        # blind: push the median toward mid-gray with a gamma map
        med = float(np.median(luma(img)))
        med = float(np.clip(med, 0.05, 0.95))
        gamma = np.log(0.5) / np.log(med)
        return gamma_correct(img, gamma)

    if category == "contrast":
        if specs:
            out = img
            for spec in reversed(specs):
                c = float(spec.params["factor"])
                out = clamp01(0.5 + (out - 0.5) / c)
            return out
        lo, hi = np.percentile(img, [1.0, 99.0])
        if hi - lo < 1e-3:
            return img.copy()
        return clamp01((img - lo) / (hi - lo))

    if category == "color_shift":
        if specs:
            out = img
            for spec in reversed(specs):
                out = _invert_color_spec(out, spec)
            return clamp01(out)
        # gray-world white balance
        if img.ndim != 3:
            return img.copy()
        means = img.mean(axis=(0, 1))
        scale = means.mean() / np.maximum(means, 1e-3)
        return clamp01(img * scale[None, None, :])

    if category == "defocus_blur":
        if specs:
            k = int(specs[-1].params["kernel_size"])
            return _dct_deconv(img, gaussian_kernel(defocus_sigma(k), k))
        return _unsharp(img, sigma=1.5, amount=1.2)

    if category == "motion_blur":
        if specs:
            spec = specs[-1]
            if not spec.params.get("depth_mask"):
                kernel = motion_kernel(int(spec.params["kernel_size"]), str(spec.params["direction"]))
                if _is_doubly_symmetric(kernel):
                    return _dct_deconv(img, kernel)
                return _wiener_deconv(img, kernel)
        return _unsharp(img, sigma=2.0, amount=0.9)

    if category == "gaussian_noise":
        if specs:
            spec = specs[-1]
            if spec.params.get("mode") == "salt_pepper":
                return _median(img, 3)
            sigma = float(spec.params["sigma"])
        else:
            imp = np.mean((luma(img) < 0.02) | (luma(img) > 0.98))
            if imp > 0.01:
                return _median(img, 3)
            sigma = _estimate_noise_sigma(img)
        return _spectral_denoise(img, sigma)

    if category == "pixelation":
        if specs:
            s = float(specs[-1].params["factor"])
        else:
            s = _detect_block_scale(img)
        return _grid_bicubic_up(img, s)

    if category == "rain":
        if specs and depth is not None:
            out = img
            for spec in reversed(specs):
                if spec.kind == "raindrops":
                    out = _median(out, 5)
                    continue
                fog = _fog_alpha_for(spec, depth, 90.0)
                out = _unfog(out, fog)
                layer = rain_layer(out.shape[0], out.shape[1], spec.params, _layer_seed(spec))
                out = _screen_unblend(out, layer, float(spec.params["opacity"]))
            return out
        return _median_detail(img)

    if category == "snow":
        if specs and depth is not None:
            out = img
            for spec in reversed(specs):
                fog = _fog_alpha_for(spec, depth, 95.0)
                out = _unfog(out, fog)
                layer = snow_layer(out.shape[0], out.shape[1], _layer_seed(spec))
                out = _screen_unblend(out, layer, 0.85)
            return out
        return _median_detail(img)

    if category == "clouds":
        if specs:
            out = img
            for spec in reversed(specs):
                cloud, shade = cloud_fields(out.shape[0], out.shape[1], spec.params, _layer_seed(spec))
                opacity = float(spec.params["opacity"])
                shadow = float(spec.params["shadow"])
                c = cloud if out.ndim == 2 else cloud[:, :, None]
                s = shade if out.ndim == 2 else shade[:, :, None]
                out = (out - opacity * c) / np.maximum(1.0 - opacity * c, 1e-3)
                out = out / np.maximum(1.0 - shadow * s * (1.0 - c), 1e-3)
                out = clamp01(out)
            return out
        return _median_detail(img)

    if category in ("elastic_warp", "refraction"):
        if specs:
            from .distortions import _smooth_field
            from .imaging import warp as _warp
            from .rng import child_rng

            out = img
            for spec in reversed(specs):
                rng = child_rng(spec.seed)
                h, w = out.shape[:2]
                if spec.kind == "elastic_warp":
                    sigma = float(spec.params["sigma_smooth"])
                    scale = float(spec.params["alpha_scale"])
                else:
                    sigma = float(spec.params.get("sigma_smooth", 10.0))
                    scale = float(spec.params["strength"])
                dx = _smooth_field(h, w, sigma, rng) * scale
                dy = _smooth_field(h, w, sigma, rng) * scale
                out = _warp(out, -dx, -dy)  # first-order inverse warp
            return out
        return img.copy()  # blind geometric inversion is a documented no-op

    raise ValueError(f"no registered inverse for category {category!r}")


def _layer_seed(spec: DistortionSpec) -> int:
    """The procedural-layer seed apply() derives from a spec."""
    from .rng import child_rng

    return int(child_rng(spec.seed).integers(0, 2**62))


def _median_detail(image: np.ndarray) -> np.ndarray:
    """Median base layer plus re-injected fine detail (blind streak removal)."""
    base = _median(image, 5)
    detail = image - _median(image, 3)
    return clamp01(base + 0.3 * detail)


def _grid_bicubic_up(image: np.ndarray, scale: float) -> np.ndarray:
    """Replace block replication with bicubic interpolation of the block grid.

    The forward pixelation replicated each low-resolution sample into a block,
    so sampling the block centers recovers the low-resolution image exactly;
    re-interpolating it smoothly is the registered inverse.
    """
    h, w = image.shape[:2]
    dh = max(1, int(round(h / scale)))
    dw = max(1, int(round(w / scale)))
    if dh >= h or dw >= w:
        return image.copy()
    iy = np.minimum(((np.arange(dh) + 0.5) * h / dh).astype(np.intp), h - 1)
    ix = np.minimum(((np.arange(dw) + 0.5) * w / dw).astype(np.intp), w - 1)
    small = image[np.ix_(iy, ix)]
    return resize_to(small, h, w)


def _detect_block_scale(image: np.ndarray) -> float:
    """Estimate the pixelation factor by re-rendering candidate block grids."""
    from .imaging import upsample_nearest

    h, w = image.shape[:2]
    best_s, best_err = 1.0, np.inf
    for s in np.arange(1.5, 4.6, 0.25):
        dh = max(1, int(round(h / s)))
        dw = max(1, int(round(w / s)))
        iy = np.minimum(((np.arange(dh) + 0.5) * h / dh).astype(np.intp), h - 1)
        ix = np.minimum(((np.arange(dw) + 0.5) * w / dw).astype(np.intp), w - 1)
        small = image[np.ix_(iy, ix)]
        err = float(np.mean((upsample_nearest(small, h, w) - image) ** 2))
        if err < best_err:
            best_s, best_err = float(s), err
    return best_s


# ---------------------------------------------------------------------------
# restore / auto_restore
# ---------------------------------------------------------------------------

def restore(
    request: RestorationRequest,
    image: np.ndarray,
    depth: np.ndarray | None = None,
    known_specs=None,
    present=None,
    mode: str = "composite",
    source: str = "manual",
):
    """Plan and apply inverses for the requested categories.

    ``present`` defaults to the categories of ``known_specs`` when given
    (oracle mode), else to the request targets (the caller vouches for them).
    An empty plan returns the input array bit-identically.
    """
    img = as_image(image)
    if present is None:
        if known_specs:
            present = frozenset(KIND_TO_CATEGORY[s.kind] for s in known_specs)
        else:
            present = request.targets
    p = plan(request, present, mode=mode, known_specs=known_specs, source=source)
    if not p.steps:
        return img, p
    out = img
    for step in p.steps:
        if step.op == "noop":
            continue
        out = invert(step.category, out, step.hints, depth=depth)
    return out, p


def restore_sequential(
    request: RestorationRequest,
    image: np.ndarray,
    depth: np.ndarray | None = None,
    known_specs=None,
    present=None,
    source: str = "manual",
):
    """Stepwise variant: re-plan and apply one category at a time.

    Steps follow the same canonical order as composite mode, so for inverses
    acting on disjoint mechanisms the result is bit-identical to composite.
    """
    img = as_image(image)
    if present is None:
        if known_specs:
            present = frozenset(KIND_TO_CATEGORY[s.kind] for s in known_specs)
        else:
            present = request.targets
    full = plan(request, present, mode="sequential", known_specs=known_specs, source=source)
    out = img
    for step in full.steps:
        single = RestorationRequest(frozenset({step.category}), "full", request.surface_text)
        out, _ = restore(single, out, depth=depth, known_specs=known_specs, present=present,
                         mode="sequential", source=source)
    return out, full


def auto_restore(image: np.ndarray, classifier, encoder, depth: np.ndarray | None = None, mode: str = "composite"):
    """Classifier-driven restoration: predict labels, build a standardized
    request, restore blind.  An empty prediction returns the input unchanged.
    """
    from .embedding import encode, predict_labels, to_auto_prompt

    img = as_image(image)
    labels = predict_labels(classifier, encode(encoder, img))
    if not labels:
        return img, RestorationPlan((), mode, "automated")
    request = RestorationRequest(labels, "full", to_auto_prompt(labels))
    return restore(request, img, depth=depth, present=labels, mode=mode, source="automated")
