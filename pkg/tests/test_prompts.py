"""Prompt grammar: rendering, parsing, round-trips, request modes."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prism_forge.distortions import CATEGORIES
from prism_forge.prompts import (
    PromptParseError,
    RestorationRequest,
    default_grammar,
    make_full,
    make_negative,
    make_partial,
    parse_prompt,
    render_prompt,
)
from prism_forge.rng import make_rng

nonempty_subsets = st.sets(st.sampled_from(CATEGORIES), min_size=1)


class TestRender:
    def test_fixed_single(self):
        assert render_prompt({"haze"}) == "remove the effects of haze"

    def test_fixed_list_grammar(self):
        text = render_prompt({"haze", "defocus_blur", "gaussian_noise"})
        assert text == "remove the effects of blur, haze, and noise"

    def test_fixed_pair_uses_and(self):
        assert render_prompt({"haze", "rain"}) == "remove the effects of haze and rain"

    def test_empty_targets_rejected(self):
        with pytest.raises(ValueError):
            render_prompt(set())

    def test_varied_requires_rng(self):
        with pytest.raises(ValueError):
            render_prompt({"haze"}, style="varied")

    def test_varied_is_deterministic_per_seed(self):
        a = render_prompt({"haze", "rain"}, "varied", make_rng(3))
        b = render_prompt({"haze", "rain"}, "varied", make_rng(3))
        assert a == b


class TestParse:
    def test_fused_form(self):
        assert parse_prompt("dehaze this image").targets == {"haze"}

    def test_lexicon_lookup_with_generic_blur(self):
        assert parse_prompt("remove haze and blur").targets == {"haze", "defocus_blur"}

    def test_motion_blur_longest_match(self):
        parsed = parse_prompt("remove motion blur")
        assert parsed.targets == {"motion_blur"}

    def test_no_category_raises_with_unmatched(self):
        with pytest.raises(PromptParseError) as exc:
            parse_prompt("make it prettier")
        assert "prettier" in exc.value.unmatched

    def test_empty_text_rejected(self):
        with pytest.raises(PromptParseError):
            parse_prompt("   ")

    def test_case_insensitive(self):
        assert parse_prompt("Remove The HAZE").targets == {"haze"}

    def test_modifiers_surface_as_unmatched(self):
        parsed = parse_prompt("slightly remove the haze from the sky")
        assert parsed.targets == {"haze"}
        assert "slightly" in parsed.unmatched_tokens
        assert "sky" in parsed.unmatched_tokens

    def test_spans_non_overlapping(self):
        parsed = parse_prompt("remove motion blur and blur and rain")
        spans = sorted(parsed.matched_spans)
        for (s1, e1, _), (s2, e2, _) in zip(spans, spans[1:]):
            assert e1 <= s2

    def test_never_invents_categories(self):
        parsed = parse_prompt("remove the rain")
        assert parsed.targets == {"rain"}


class TestRoundTrip:
    @pytest.mark.parametrize("cat", CATEGORIES)
    def test_fixed_singletons(self, cat):
        assert parse_prompt(render_prompt({cat})).targets == {cat}

    @given(nonempty_subsets, st.integers(min_value=0, max_value=2**31 - 1))
    @settings(max_examples=300, deadline=None)
    def test_varied_round_trip(self, targets, seed):
        text = render_prompt(targets, "varied", make_rng(seed))
        assert parse_prompt(text).targets == frozenset(targets)

    @given(nonempty_subsets)
    @settings(max_examples=150, deadline=None)
    def test_fixed_round_trip(self, targets):
        assert parse_prompt(render_prompt(targets)).targets == frozenset(targets)

    def test_parser_soundness_only_present_surface_forms(self):
        g = default_grammar()
        text = "remove the haze and the rain"
        targets = parse_prompt(text).targets
        for cat in targets:
            forms = g.categories[cat]["nouns"] + g.categories[cat]["fused"]
            assert any(f in text for f in forms)


class TestRequests:
    def test_partial_two_applied(self):
        rng = make_rng(0)
        seen = set()
        for _ in range(50):
            req = make_partial({"haze", "rain"}, rng)
            assert req.mode == "partial"
            assert req.targets in ({"haze"}, {"rain"})
            seen.add(req.targets)
        assert len(seen) == 2

    def test_partial_uniform_over_strict_subsets(self):
        rng = make_rng(1)
        counts: dict = {}
        n = 30_000
        for _ in range(n):
            req = make_partial({"haze", "rain", "snow"}, rng)
            counts[req.targets] = counts.get(req.targets, 0) + 1
        assert len(counts) == 6  # 2^3 - 2 strict non-empty subsets
        for c in counts.values():
            assert abs(c / n - 1 / 6) < 0.02

    def test_partial_needs_two_categories(self):
        with pytest.raises(ValueError):
            make_partial({"haze"}, make_rng(0))

    def test_negative_disjoint_always(self):
        rng = make_rng(2)
        for _ in range(2000):
            req = make_negative({"haze"}, rng)
            assert req.mode == "negative"
            assert req.targets
            assert "haze" not in req.targets

    def test_negative_forced_choice(self):
        applied = set(CATEGORIES) - {"snow"}
        req = make_negative(applied, make_rng(3))
        assert req.targets == {"snow"}

    def test_negative_full_vocabulary_rejected(self):
        with pytest.raises(ValueError):
            make_negative(set(CATEGORIES), make_rng(0))

    def test_full_mode(self):
        req = make_full({"haze", "rain"})
        assert req.mode == "full"
        assert req.targets == {"haze", "rain"}
        assert parse_prompt(req.surface_text).targets == req.targets

    def test_request_validates_mode_and_categories(self):
        with pytest.raises(ValueError):
            RestorationRequest(frozenset({"haze"}), "sometimes")
        with pytest.raises(ValueError):
            RestorationRequest(frozenset({"sepia"}), "full")

    @given(st.sets(st.sampled_from(CATEGORIES), min_size=2), st.integers(0, 2**31 - 1))
    @settings(max_examples=150, deadline=None)
    def test_partial_invariants_fuzzed(self, applied, seed):
        req = make_partial(applied, make_rng(seed))
        assert req.targets < frozenset(applied)
        assert req.targets

    @given(
        st.sets(st.sampled_from(CATEGORIES), min_size=1, max_size=len(CATEGORIES) - 1),
        st.integers(0, 2**31 - 1),
    )
    @settings(max_examples=150, deadline=None)
    def test_negative_invariants_fuzzed(self, applied, seed):
        req = make_negative(applied, make_rng(seed))
        assert not (req.targets & frozenset(applied))
        assert req.targets


def test_grammar_has_three_surface_forms_per_category():
    g = default_grammar()
    for cat in CATEGORIES:
        assert len(g.categories[cat]["nouns"]) >= 3
