"""Degradation library: parameter ranges, formula oracles, chain semantics."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prism_forge.distortions import (
    CATEGORIES,
    KIND_TO_CATEGORY,
    KINDS,
    DistortionSpec,
    apply,
    apply_chain,
    apply_contrast,
    apply_saturation,
    compress_shadows,
    gamma_correct,
    kinds_to_labels,
    sample_spec,
    soft_clip_highlights,
)
from prism_forge.distortions import expand_shadows, invert_soft_clip
from prism_forge.rng import make_rng

RANGES = {
    ("motion_blur", "kernel_size"): (5, 10),
    ("motion_blur", "tau_depth"): (0.3, 0.7),
    ("elastic_warp", "sigma_smooth"): (20, 30),
    ("elastic_warp", "alpha_scale"): (10, 20),
    ("refraction", "strength"): (20, 80),
    ("defocus_blur", "kernel_size"): (3, 19),
    ("low_light", "factor"): (0.4, 0.9),
    ("color_jitter", "cast_intensity"): (0.1, 0.3),
    ("overexposure", "factor"): (1.0, 1.5),
    ("overexposure", "tau_clip"): (0.4, 0.9),
    ("underexposure", "factor"): (0.5, 0.9),
    ("underexposure", "tau_shadow"): (0.1, 0.3),
    ("underexposure", "sigma_noise"): (0.02, 0.08),
    ("contrast", "factor"): (0.4, 1.0),
    ("saturation", "factor"): (0.4, 1.0),
    ("haze", "alpha"): (0.65, 0.9),
    ("rain", "kernel_size"): (7, 23),
    ("rain", "zoom"): (1.0, 3.5),
    ("rain", "visibility"): (8000, 15000),
    ("rain", "opacity"): (0.2, 0.4),
    ("snow", "visibility"): (10000, 20000),
    ("clouds", "opacity"): (0.7, 1.0),
    ("clouds", "shadow"): (0.2, 0.7),
    ("clouds", "blur_scale"): (1.0, 3.0),
    ("raindrops", "count"): (20, 60),
    ("raindrops", "edge_darken"): (0.4, 0.8),
    ("pixelation", "factor"): (2.0, 4.0),
}


@pytest.fixture(scope="module")
def scene():
    rng = make_rng(9)
    img = rng.random((32, 32, 3))
    depth = rng.random((32, 32))
    return img, depth


class TestSampling:
    @pytest.mark.parametrize("kind", KINDS)
    def test_parameters_stay_in_ranges(self, kind):
        rng = make_rng(123)
        for _ in range(400):
            spec = sample_spec(kind, rng)
            for pname, value in spec.params.items():
                key = (kind, pname)
                if key in RANGES:
                    lo, hi = RANGES[key]
                    assert lo <= value <= hi, f"{kind}.{pname}={value} outside [{lo},{hi}]"
            if kind == "defocus_blur":
                assert spec.params["kernel_size"] % 2 == 1
            if kind == "color_jitter":
                assert all(-0.4 <= d <= 0.4 for d in spec.params["delta_rgb"])
            if kind == "raindrops":
                assert all(3.0 <= r <= 50.0 for r in spec.params["radii"])
            if kind == "gaussian_noise":
                if spec.params["mode"] == "gaussian":
                    assert 0.05 <= spec.params["sigma"] <= 0.1
                else:
                    assert 2.0 <= spec.params["corruption_pct"] <= 8.0

    def test_low_light_uniform_moments(self):
        rng = make_rng(77)
        draws = np.array([sample_spec("low_light", rng).params["factor"] for _ in range(10_000)])
        assert draws.min() >= 0.4 and draws.max() <= 0.9
        assert abs(draws.mean() - 0.65) < 0.01  # uniform mean (0.4+0.9)/2

    def test_noise_mode_coin_is_roughly_fair(self):
        rng = make_rng(5)
        modes = [sample_spec("gaussian_noise", rng).params["mode"] for _ in range(4000)]
        share = modes.count("gaussian") / len(modes)
        assert 0.45 < share < 0.55

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            sample_spec("vignette", make_rng(0))


class TestFormulas:
    def test_haze_blend_hand_evaluated(self, scene):
        img = np.full((4, 4, 3), 0.5)
        depth = np.ones((4, 4))
        spec = DistortionSpec("haze", {"alpha": 0.65}, seed=1)
        out = apply(spec, img, depth)
        # I * (1 - D*alpha) + D*alpha = 0.5 * 0.35 + 0.65
        assert np.allclose(out, 0.5 * 0.35 + 0.65, atol=1e-12)

    def test_haze_zero_depth_is_identity(self, scene):
        img, _ = scene
        spec = DistortionSpec("haze", {"alpha": 0.9}, seed=1)
        assert np.array_equal(apply(spec, img, np.zeros(img.shape[:2])), img)

    def test_low_light_multiplicative(self):
        img = np.ones((3, 3, 3))
        out = apply(DistortionSpec("low_light", {"factor": 0.4}, seed=0), img)
        assert np.allclose(out, 0.4, atol=1e-12)

    def test_gamma_correct_hand_evaluated(self):
        img = np.array([[0.25, 0.5], [0.75, 1.0]])
        out = gamma_correct(img, 1.0 / 1.25)
        assert np.allclose(out, img ** (1.0 / 1.25), atol=1e-15)

    def test_contrast_pivot_and_identity(self):
        img = np.array([[0.2, 0.8]])
        out = apply_contrast(img, 0.5)
        assert np.allclose(out, [[0.35, 0.65]], atol=1e-12)
        assert np.allclose(apply_contrast(img, 1.0), img, atol=1e-15)

    def test_saturation_preserves_luma(self, scene):
        img, _ = scene
        out = apply_saturation(img, 0.4)
        from prism_forge.imaging import luma

        assert np.allclose(luma(out), luma(img), atol=1e-9)

    def test_shadow_and_highlight_maps_invert(self):
        v = np.linspace(0.0, 1.0, 101)
        for tau in (0.1, 0.25):
            assert np.allclose(expand_shadows(compress_shadows(v, tau), tau), v, atol=1e-9)
        for tau in (0.4, 0.9):
            assert np.allclose(invert_soft_clip(soft_clip_highlights(v, tau), tau), v, atol=1e-9)


class TestApply:
    @pytest.mark.parametrize("kind", KINDS)
    def test_every_kind_preserves_shape_and_range(self, kind, scene):
        img, depth = scene
        spec = sample_spec(kind, make_rng(31))
        out = apply(spec, img, depth)
        assert out.shape == img.shape
        assert out.min() >= 0.0 and out.max() <= 1.0

    @pytest.mark.parametrize("kind", KINDS)
    def test_apply_is_pure_given_spec(self, kind, scene):
        img, depth = scene
        spec = sample_spec(kind, make_rng(55))
        assert np.array_equal(apply(spec, img, depth), apply(spec, img, depth))

    def test_depth_required_kinds_raise_without_depth(self, scene):
        img, _ = scene
        for kind in ("haze", "rain", "snow"):
            spec = sample_spec(kind, make_rng(1))
            with pytest.raises(ValueError):
                apply(spec, img)

    def test_depth_dim_mismatch_rejected(self, scene):
        img, _ = scene
        spec = sample_spec("haze", make_rng(1))
        with pytest.raises(ValueError):
            apply(spec, img, np.zeros((4, 4)))


class TestChain:
    def test_singleton_chain_equals_apply(self, scene):
        img, depth = scene
        spec = sample_spec("haze", make_rng(2))
        assert np.array_equal(apply_chain([spec], img, depth), apply(spec, img, depth))

    def test_multiplicative_composition(self):
        img = np.full((2, 2, 3), 0.8)
        s = DistortionSpec("low_light", {"factor": 0.5}, seed=0)
        out = apply_chain([s, s], img)
        assert np.allclose(out, 0.2, atol=1e-12)

    def test_order_matters(self, scene):
        img, depth = scene
        over = sample_spec("overexposure", make_rng(3))
        haze = sample_spec("haze", make_rng(4))
        ab = apply_chain([over, haze], img, depth)
        ba = apply_chain([haze, over], img, depth)
        assert not np.allclose(ab, ba)

    def test_empty_chain_rejected(self, scene):
        img, depth = scene
        with pytest.raises(ValueError):
            apply_chain([], img, depth)


class TestLabels:
    def test_vocabulary_is_fourteen_categories(self):
        assert len(CATEGORIES) == 14
        assert len(set(KIND_TO_CATEGORY.values())) == 14
        assert set(KIND_TO_CATEGORY) == set(KINDS)
        assert len(KINDS) == 17

    def test_brightness_merge(self):
        assert kinds_to_labels({"overexposure"}) == {"brightness"}
        assert kinds_to_labels({"overexposure", "underexposure"}) == {"brightness"}

    def test_color_merge_and_rain_merge(self):
        assert kinds_to_labels({"color_jitter", "saturation"}) == {"color_shift"}
        assert kinds_to_labels({"raindrops"}) == {"rain"}

    def test_identity_on_own_category_kinds(self):
        assert kinds_to_labels({"haze", "rain", "motion_blur"}) == {"haze", "rain", "motion_blur"}

    @given(st.sets(st.sampled_from(KINDS)))
    @settings(max_examples=200, deadline=None)
    def test_mapping_total_and_bounded(self, kinds):
        labels = kinds_to_labels(kinds)
        assert len(labels) <= len(kinds)
        assert labels <= set(CATEGORIES)

    def test_surjective_onto_vocabulary(self):
        assert kinds_to_labels(KINDS) == set(CATEGORIES)

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            kinds_to_labels({"sepia"})


class TestSpecSerialization:
    @pytest.mark.parametrize("kind", KINDS)
    def test_json_roundtrip(self, kind):
        spec = sample_spec(kind, make_rng(8))
        back = DistortionSpec.from_json(spec.to_json())
        assert back == spec

    def test_unknown_tag_rejected(self):
        with pytest.raises(ValueError, match="vignette"):
            DistortionSpec.from_json({"kind": "vignette", "params": {}})
