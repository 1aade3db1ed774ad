"""Benchmark builder: scenes, splits, modes, manifest round-trips, determinism."""

import hashlib
import json
from collections import Counter
from pathlib import Path

import numpy as np
import pytest

from prism_forge.dataset import (
    DatasetConfig,
    Triplet,
    build_dataset,
    generate_clean,
    read_manifest,
    split_assignments,
    write_manifest,
)
from prism_forge.imaging import luma
from prism_forge.rng import make_rng


class TestCleanScenes:
    def test_checker_two_levels(self):
        img, _ = generate_clean(32, "checker", make_rng(0))
        assert len(np.unique(luma(img).round(12))) == 2

    def test_gradient_monotone_row_means(self):
        img, _ = generate_clean(32, "gradient", make_rng(1))
        rows = luma(img).mean(axis=1)
        diffs = np.diff(rows)
        assert (diffs >= -1e-12).all() or (diffs <= 1e-12).all()

    def test_deterministic(self):
        a, da = generate_clean(24, "texture", make_rng(5))
        b, db = generate_clean(24, "texture", make_rng(5))
        assert np.array_equal(a, b) and np.array_equal(da, db)

    def test_depth_in_range_and_paired_dims(self):
        img, depth = generate_clean(20, "shapes", make_rng(2))
        assert depth.shape == img.shape[:2]
        assert depth.min() >= 0.0 and depth.max() <= 1.0

    def test_small_size_rejected(self):
        with pytest.raises(ValueError):
            generate_clean(8, "gradient", make_rng(0))

    def test_unknown_scene_rejected(self):
        with pytest.raises(ValueError):
            generate_clean(32, "forest", make_rng(0))


class TestSplitQuota:
    def test_exact_counts(self):
        ids = [f"item-{i:07d}" for i in range(1000)]
        splits = split_assignments(ids, (0.80, 0.19, 0.01))
        counts = Counter(splits.values())
        assert counts["train"] == 800 and counts["val"] == 190 and counts["test"] == 10

    def test_stable_under_regeneration(self):
        ids = [f"item-{i:07d}" for i in range(500)]
        assert split_assignments(ids, (0.8, 0.19, 0.01)) == split_assignments(ids, (0.8, 0.19, 0.01))

    def test_membership_not_positional(self):
        ids = [f"item-{i:07d}" for i in range(200)]
        splits = split_assignments(ids, (0.8, 0.19, 0.01))
        first_block = [splits[i] for i in ids[:50]]
        assert len(set(first_block)) > 1  # hash-ranked, not contiguous


@pytest.fixture(scope="module")
def small_dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("ds")
    cfg = DatasetConfig(n_images=300, image_size=32, global_seed=42)
    triplets = build_dataset(cfg, out)
    return cfg, out, triplets


class TestBuildDataset:
    def test_artifacts_exist(self, small_dataset):
        _, out, triplets = small_dataset
        assert (out / "manifest.jsonl").exists()
        assert (out / "config.json").exists()
        for t in triplets[:10]:
            assert (out / t.clean_path).exists()
            assert (out / t.distorted_path).exists()
            assert (out / t.depth_path).exists()

    def test_exact_split_and_mode_quotas(self, small_dataset):
        _, _, triplets = small_dataset
        splits = Counter(t.split for t in triplets)
        assert splits == {"train": 240, "val": 57, "test": 3}
        modes = Counter(t.mode for t in triplets)
        assert modes == {"full": 210, "partial": 60, "negative": 30}

    def test_no_duplicate_kinds_per_item(self, small_dataset):
        _, _, triplets = small_dataset
        for t in triplets:
            kinds = [s.kind for s in t.applied_specs]
            assert len(kinds) == len(set(kinds))
            assert 1 <= len(kinds) <= 3

    def test_mode_invariants(self, small_dataset):
        _, _, triplets = small_dataset
        for t in triplets:
            if t.mode == "full":
                assert t.target_labels == t.applied_labels
            elif t.mode == "partial":
                assert t.target_labels < t.applied_labels and t.target_labels
            else:
                assert not (t.target_labels & t.applied_labels) and t.target_labels

    def test_prompts_parse_back_to_targets(self, small_dataset):
        from prism_forge.prompts import parse_prompt

        _, _, triplets = small_dataset
        for t in triplets:
            assert parse_prompt(t.prompt).targets == t.target_labels

    def test_labels_match_kinds(self, small_dataset):
        from prism_forge.distortions import kinds_to_labels

        _, _, triplets = small_dataset
        for t in triplets:
            assert t.applied_labels == kinds_to_labels(s.kind for s in t.applied_specs)

    def test_distorted_images_differ_from_clean(self, small_dataset):
        from prism_forge.dataset import load_image

        _, out, triplets = small_dataset
        differing = sum(
            not np.array_equal(load_image(t, out, "clean"), load_image(t, out, "distorted"))
            for t in triplets[:40]
        )
        assert differing >= 38  # near-identity warps can quantize to equality


class TestDeterminism:
    def test_regeneration_is_byte_identical(self, tmp_path):
        cfg = DatasetConfig(n_images=60, image_size=32, global_seed=42)
        d1, d2 = tmp_path / "a", tmp_path / "b"
        build_dataset(cfg, d1)
        build_dataset(cfg, d2)

        def tree_digest(root: Path) -> dict:
            out = {}
            for p in sorted(root.rglob("*")):
                if p.is_file():
                    out[str(p.relative_to(root))] = hashlib.sha256(p.read_bytes()).hexdigest()
            return out

        assert tree_digest(d1) == tree_digest(d2)

    def test_different_seed_differs(self, tmp_path):
        cfg1 = DatasetConfig(n_images=20, image_size=32, global_seed=42)
        cfg2 = DatasetConfig(n_images=20, image_size=32, global_seed=43)
        t1 = build_dataset(cfg1, tmp_path / "a")
        t2 = build_dataset(cfg2, tmp_path / "b")
        assert any(x.applied_specs != y.applied_specs for x, y in zip(t1, t2))


class TestManifestIO:
    def test_roundtrip(self, small_dataset, tmp_path):
        _, _, triplets = small_dataset
        path = tmp_path / "m.jsonl"
        write_manifest(triplets[:100], path)
        back = read_manifest(path)
        assert back == list(triplets[:100])

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        assert read_manifest(path) == []

    def test_unknown_kind_tag_named_in_error(self, small_dataset, tmp_path):
        _, _, triplets = small_dataset
        rec = triplets[0].to_json()
        rec["applied_specs"] = [{"kind": "vignette", "params": {}, "seed": 0}]
        path = tmp_path / "bad.jsonl"
        path.write_text(json.dumps(rec) + "\n")
        with pytest.raises(ValueError, match="vignette"):
            read_manifest(path)

    def test_malformed_line_number_reported(self, small_dataset, tmp_path):
        _, _, triplets = small_dataset
        path = tmp_path / "bad2.jsonl"
        good = json.dumps(triplets[0].to_json())
        path.write_text(good + "\n" + "{not json}\n")
        with pytest.raises(ValueError, match=":2:"):
            read_manifest(path)


class TestConfig:
    def test_fraction_validation(self):
        with pytest.raises(ValueError):
            DatasetConfig(mode_fractions=(0.5, 0.5, 0.5)).validate()

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            DatasetConfig(kinds=("sepia",)).validate()

    def test_json_roundtrip(self):
        cfg = DatasetConfig(n_images=5, kinds=("haze", "low_light"))
        back = DatasetConfig.from_json(json.loads(json.dumps(cfg.to_json())))
        assert back == cfg
