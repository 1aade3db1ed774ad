"""Mixed-degradation benchmark builder.

Generates procedural clean scenes with synthetic depth, applies compound
degradations (up to N distinct kinds in random order), attaches full /
partial / negative restoration prompts, assigns train/val/test splits, and
persists everything as PNG/PGM files plus a JSON-Lines manifest.

Reproducibility contract: the same config regenerates byte-identical images
and manifests.  Every item derives its own child generator from the global
seed, splits are a deterministic quota over hash-ranked ids, and prompt/mode
assignment is keyed by item id.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import prompts
from .distortions import (
    CATEGORIES,
    KINDS,
    DistortionSpec,
    apply_chain,
    kinds_to_labels,
    sample_spec,
)
from .fileio import read_depth, read_png, write_depth, write_png
from .imaging import clamp01, perlin_noise
from .rng import DEFAULT_SEED, child_rng, child_seed, stable_hash64

__all__ = [
    "SCENE_KINDS",
    "Triplet",
    "DatasetConfig",
    "generate_clean",
    "build_dataset",
    "write_manifest",
    "read_manifest",
    "load_image",
    "load_depth",
]

SCENE_KINDS = ("gradient", "shapes", "texture", "checker")

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class Triplet:
    """One dataset row: a clean/distorted image pair plus its prompt."""

    id: str
    clean_path: str
    distorted_path: str
    depth_path: str
    prompt: str
    applied_specs: tuple
    applied_labels: frozenset
    target_labels: frozenset
    mode: str
    split: str
    seed: int

    def to_json(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "id": self.id,
            "clean_path": self.clean_path,
            "distorted_path": self.distorted_path,
            "depth_path": self.depth_path,
            "prompt": self.prompt,
            "applied_specs": [s.to_json() for s in self.applied_specs],
            "applied_labels": sorted(self.applied_labels),
            "target_labels": sorted(self.target_labels),
            "mode": self.mode,
            "split": self.split,
            "seed": int(self.seed),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Triplet":
        specs = tuple(DistortionSpec.from_json(s) for s in obj["applied_specs"])
        for lab in list(obj["applied_labels"]) + list(obj["target_labels"]):
            if lab not in CATEGORIES:
                raise ValueError(f"unknown label {lab!r}")
        if obj["mode"] not in ("full", "partial", "negative"):
            raise ValueError(f"unknown mode {obj['mode']!r}")
        if obj["split"] not in ("train", "val", "test"):
            raise ValueError(f"unknown split {obj['split']!r}")
        return cls(
            id=obj["id"],
            clean_path=obj["clean_path"],
            distorted_path=obj["distorted_path"],
            depth_path=obj.get("depth_path", ""),
            prompt=obj["prompt"],
            applied_specs=specs,
            applied_labels=frozenset(obj["applied_labels"]),
            target_labels=frozenset(obj["target_labels"]),
            mode=obj["mode"],
            split=obj["split"],
            seed=int(obj["seed"]),
        )


@dataclass
class DatasetConfig:
    n_images: int = 1000
    image_size: int = 64
    n_max: int = 3
    n_distribution: tuple = ()  # empty = uniform over {1..n_max}
    mode_fractions: tuple = (0.70, 0.20, 0.10)  # full, partial, negative
    split_fractions: tuple = (0.80, 0.19, 0.01)  # train, val, test
    prompt_style: str = "varied"
    variants_per_clean: int = 4
    kinds: tuple = ()  # empty = all 17 transform kinds
    global_seed: int = DEFAULT_SEED

    def validate(self) -> None:
        if self.n_images < 1:
            raise ValueError("n_images must be >= 1")
        if self.image_size < 16:
            raise ValueError("image_size must be >= 16")
        if self.n_max < 1:
            raise ValueError("n_max must be >= 1")
        for name, fr in (("mode_fractions", self.mode_fractions), ("split_fractions", self.split_fractions)):
            if abs(sum(fr) - 1.0) > 1e-9:
                raise ValueError(f"{name} must sum to 1, got {fr}")
        if self.prompt_style not in ("fixed", "varied"):
            raise ValueError(f"unknown prompt_style {self.prompt_style!r}")
        if self.variants_per_clean < 1:
            raise ValueError("variants_per_clean must be >= 1")
        for k in self.kinds:
            if k not in KINDS:
                raise ValueError(f"unknown distortion kind {k!r}")
        if self.n_distribution and len(self.n_distribution) != self.n_max:
            raise ValueError("n_distribution must have n_max entries")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "DatasetConfig":
        cfg = cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in obj.items()})
        cfg.validate()
        return cfg


# ---------------------------------------------------------------------------
# Procedural clean scenes
# ---------------------------------------------------------------------------

def _random_color(rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(0.08, 0.92, size=3)


def _normalize_photometry(img: np.ndarray, lo: float = 0.10, hi: float = 0.90) -> np.ndarray:
    """Affinely map the scene's luma span onto [lo, hi].

    Clean scenes have a known photometric envelope, so photometric
    degradations (darkening, exposure shifts, contrast loss) are identifiable
    from a single image instead of being confounded with the random palette.
    """
    from .imaging import luma as _luma

    l = _luma(img)
    lmin, lmax = float(l.min()), float(l.max())
    if lmax - lmin < 1e-6:
        return np.clip(img - lmin + (lo + hi) / 2.0, 0.0, 1.0)
    scale = (hi - lo) / (lmax - lmin)
    return np.clip((img - lmin) * scale + lo, 0.0, 1.0)


def _scene_gradient(size: int, rng: np.random.Generator) -> np.ndarray:
    from .imaging import luma as _luma

    while True:
        top, bottom = _random_color(rng), _random_color(rng)
        if abs(_luma(top.reshape(1, 1, 3))[0, 0] - _luma(bottom.reshape(1, 1, 3))[0, 0]) >= 0.25:
            break
    t = np.linspace(0.0, 1.0, size)[:, None, None]
    rows = top[None, None, :] * (1 - t) + bottom[None, None, :] * t  # (size, 1, 3)
    return np.broadcast_to(rows, (size, size, 3)).copy()


def _scene_shapes(size: int, rng: np.random.Generator) -> np.ndarray:
    img = _scene_gradient(size, rng)
    yy, xx = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    for _ in range(int(rng.integers(4, 10))):
        color = _random_color(rng)
        if rng.random() < 0.5:
            cy, cx = rng.uniform(0, size, 2)
            r = rng.uniform(size * 0.06, size * 0.25)
            mask = (yy - cy) ** 2 + (xx - cx) ** 2 < r * r
        else:
            y0, x0 = rng.uniform(0, size * 0.8, 2)
            hgt, wdt = rng.uniform(size * 0.1, size * 0.4, 2)
            mask = (yy >= y0) & (yy < y0 + hgt) & (xx >= x0) & (xx < x0 + wdt)
        img[mask] = color
    return img


def _scene_texture(size: int, rng: np.random.Generator) -> np.ndarray:
    coarse = perlin_noise(size, size, max(4.0, size / 6.0), rng)
    fine = perlin_noise(size, size, max(2.0, size / 16.0), rng)
    grain = rng.uniform(-1.0, 1.0, (size, size))
    t = np.clip(0.62 * coarse + 0.3 * fine + 0.08 * grain, 0.0, 1.0)
    c0, c1 = _random_color(rng), _random_color(rng)
    return c0[None, None, :] * (1 - t[:, :, None]) + c1[None, None, :] * t[:, :, None]


def _scene_checker(size: int, rng: np.random.Generator) -> np.ndarray:
    tile = int(rng.choice([4, 8, 16]))
    a, b = _random_color(rng), _random_color(rng)
    yy, xx = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    parity = ((yy // tile) + (xx // tile)) % 2
    return np.where(parity[:, :, None] == 0, a[None, None, :], b[None, None, :])


_SCENE_FNS = {
    "gradient": _scene_gradient,
    "shapes": _scene_shapes,
    "texture": _scene_texture,
    "checker": _scene_checker,
}


def _synth_depth(size: int, rng: np.random.Generator) -> np.ndarray:
    """Depth proxy: far at the top, near at the bottom, with smooth relief."""
    ramp = np.linspace(1.0, 0.0, size)[:, None] * np.ones((1, size))
    relief = perlin_noise(size, size, max(4.0, size / 3.0), rng)
    return np.clip(0.65 * ramp + 0.35 * relief, 0.0, 1.0)


def generate_clean(image_size: int, scene_kind: str, rng: np.random.Generator):
    """Procedural clean scene plus its synthetic depth map.

    Scenes are photometrically standardized (luma spanning 0.10..0.90), so
    photometric degradations remain identifiable against the clean envelope.
    """
    if image_size < 16:
        raise ValueError(f"image_size must be >= 16, got {image_size}")
    if scene_kind not in _SCENE_FNS:
        raise ValueError(f"unknown scene kind {scene_kind!r}")
    img = _normalize_photometry(clamp01(_SCENE_FNS[scene_kind](image_size, rng)))
    depth = _synth_depth(image_size, rng)
    return img, depth


# ---------------------------------------------------------------------------
# Manifest I/O
# ---------------------------------------------------------------------------

def write_manifest(triplets, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for t in triplets:
            f.write(json.dumps(t.to_json(), sort_keys=True) + "\n")


def read_manifest(path: str | os.PathLike) -> list[Triplet]:
    out: list[Triplet] = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(Triplet.from_json(json.loads(line)))
            except (ValueError, KeyError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed manifest line: {exc}") from exc
    return out


def load_image(triplet: Triplet, manifest_dir: str | os.PathLike, which: str = "distorted") -> np.ndarray:
    rel = triplet.distorted_path if which == "distorted" else triplet.clean_path
    return read_png(Path(manifest_dir) / rel)


def load_depth(triplet: Triplet, manifest_dir: str | os.PathLike) -> np.ndarray:
    return read_depth(Path(manifest_dir) / triplet.depth_path)


# ---------------------------------------------------------------------------
# Quota assignment helpers (exact fractions, stable under regeneration)
# ---------------------------------------------------------------------------

def split_assignments(ids: list[str], fractions) -> dict[str, str]:
    """Deterministic split quota over hash-ranked ids.

    Ranking by a stable hash of the id makes membership pseudorandom w.r.t.
    generation order while keeping the counts exact: the first
    floor(n*f_train) ranked ids are train, the next block val, the rest test.
    Regenerating the same id set reproduces the same assignment.
    """
    n = len(ids)
    ranked = sorted(ids, key=lambda s: (stable_hash64(s, salt="split"), s))
    n_train = math.floor(n * fractions[0] + 0.5)
    n_val = math.floor(n * (fractions[0] + fractions[1]) + 0.5) - n_train
    out = {}
    for rank, sid in enumerate(ranked):
        if rank < n_train:
            out[sid] = "train"
        elif rank < n_train + n_val:
            out[sid] = "val"
        else:
            out[sid] = "test"
    return out


def mode_assignments(ids: list[str], eligible_partial: dict[str, bool], fractions) -> dict[str, str]:
    """Deterministic mode quota over hash-ranked ids.

    Negative and partial quotas are filled in hash order (partial only from
    items with >= 2 applied labels); everything else is full.  This keeps the
    realized mode mix at the configured fractions exactly, which independent
    per-item draws cannot do once partial eligibility is constrained.
    """
    n = len(ids)
    ranked = sorted(ids, key=lambda s: (stable_hash64(s, salt="mode"), s))
    n_negative = math.floor(n * fractions[2] + 0.5)
    n_partial = math.floor(n * fractions[1] + 0.5)
    out = {sid: "full" for sid in ids}
    for sid in ranked[:n_negative]:
        out[sid] = "negative"
    filled = 0
    for sid in ranked[n_negative:]:
        if filled >= n_partial:
            break
        if eligible_partial[sid]:
            out[sid] = "partial"
            filled += 1
    return out


# ---------------------------------------------------------------------------
# build_dataset
# ---------------------------------------------------------------------------

def build_dataset(config: DatasetConfig, out_dir: str | os.PathLike) -> list[Triplet]:
    """Generate the full benchmark under ``out_dir`` and return its triplets.

    Layout: clean/, depth/, dist/ image directories, manifest.jsonl, and a
    mirror of the config as config.json.
    """
    config.validate()
    out = Path(out_dir)
    for sub in ("clean", "depth", "dist"):
        (out / sub).mkdir(parents=True, exist_ok=True)

    seed = config.global_seed
    kinds = tuple(config.kinds) if config.kinds else KINDS
    n_items = config.n_images
    n_clean = math.ceil(n_items / config.variants_per_clean)

    # clean scenes + depth
    clean_images: list[np.ndarray] = []
    depth_maps: list[np.ndarray] = []
    clean_rel: list[str] = []
    depth_rel: list[str] = []
    for c in range(n_clean):
        rng = child_rng(seed, 1, c)
        kind = SCENE_KINDS[c % len(SCENE_KINDS)]
        img, depth = generate_clean(config.image_size, kind, rng)
        rel_i = f"clean/scene-{c:06d}.png"
        rel_d = f"depth/scene-{c:06d}.pgm"
        write_png(out / rel_i, img)
        write_depth(out / rel_d, depth)
        # re-read so downstream stages see exactly the 8-bit on-disk data
        clean_images.append(read_png(out / rel_i))
        depth_maps.append(read_depth(out / rel_d))
        clean_rel.append(rel_i)
        depth_rel.append(rel_d)

    if config.n_distribution:
        n_probs = np.asarray(config.n_distribution, dtype=np.float64)
        n_probs = n_probs / n_probs.sum()
    else:
        n_probs = np.full(config.n_max, 1.0 / config.n_max)

    ids = [f"item-{i:07d}" for i in range(n_items)]
    specs_by_id: dict[str, tuple[DistortionSpec, ...]] = {}
    labels_by_id: dict[str, frozenset] = {}
    dist_rel: dict[str, str] = {}
    clean_of: dict[str, int] = {}
    for i, item_id in enumerate(ids):
        rng = child_rng(seed, 2, i)
        c = i // config.variants_per_clean
        n = int(rng.choice(np.arange(1, config.n_max + 1), p=n_probs))
        n = min(n, len(kinds))
        chosen = [kinds[j] for j in rng.choice(len(kinds), size=n, replace=False)]
        specs = tuple(sample_spec(k, rng) for k in chosen)
        distorted = apply_chain(list(specs), clean_images[c], depth_maps[c])
        rel = f"dist/{item_id}.png"
        write_png(out / rel, distorted)
        specs_by_id[item_id] = specs
        labels_by_id[item_id] = kinds_to_labels(chosen)
        dist_rel[item_id] = rel
        clean_of[item_id] = c

    splits = split_assignments(ids, config.split_fractions)
    modes = mode_assignments(
        ids, {sid: len(labels_by_id[sid]) >= 2 for sid in ids}, config.mode_fractions
    )

    triplets: list[Triplet] = []
    for i, item_id in enumerate(ids):
        rng = child_rng(seed, 3, i)
        applied = labels_by_id[item_id]
        mode = modes[item_id]
        if mode == "partial":
            req = prompts.make_partial(applied, rng, style=config.prompt_style)
        elif mode == "negative":
            req = prompts.make_negative(applied, rng, style=config.prompt_style)
        else:
            req = prompts.make_full(applied, style=config.prompt_style, rng=rng)
        c = clean_of[item_id]
        triplets.append(
            Triplet(
                id=item_id,
                clean_path=clean_rel[c],
                distorted_path=dist_rel[item_id],
                depth_path=depth_rel[c],
                prompt=req.surface_text,
                applied_specs=specs_by_id[item_id],
                applied_labels=applied,
                target_labels=req.targets,
                mode=mode,
                split=splits[item_id],
                seed=child_seed(seed, 2, i),
            )
        )

    write_manifest(triplets, out / "manifest.jsonl")
    with open(out / "config.json", "w", encoding="utf-8") as f:
        json.dump(config.to_json(), f, indent=2, sort_keys=True)
        f.write("\n")
    return triplets
