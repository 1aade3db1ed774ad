"""Bridge between restoration instructions and structured label sets.

A finite template grammar renders varied natural-language prompts for any
target label set, and a longest-match lexicon parser recovers the label set
from free-form text.  Rendering and parsing are exact inverses: for every
non-empty target set, every style, and every seed,
``parse_prompt(render_prompt(S)).targets == S``.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources
from itertools import chain, combinations

import numpy as np

from .distortions import CATEGORIES

__all__ = [
    "RestorationRequest",
    "ParsedPrompt",
    "PromptParseError",
    "PromptGrammar",
    "default_grammar",
    "render_prompt",
    "parse_prompt",
    "make_partial",
    "make_negative",
    "make_full",
]


class PromptParseError(ValueError):
    """No recognizable distortion terms in the prompt."""

    def __init__(self, message: str, unmatched: list[str]):
        super().__init__(message)
        self.unmatched = unmatched


@dataclass(frozen=True)
class RestorationRequest:
    """Parsed intent: which distortion categories to remove, and how.

    Mode invariants relative to the applied set A of the image the request is
    paired with: full => targets == A; partial => targets is a strict
    non-empty subset of A; negative => targets disjoint from A and non-empty.
    """

    targets: frozenset[str]
    mode: str  # full | partial | negative
    surface_text: str = ""

    def __post_init__(self):
        if self.mode not in ("full", "partial", "negative"):
            raise ValueError(f"unknown request mode {self.mode!r}")
        for t in self.targets:
            if t not in CATEGORIES:
                raise ValueError(f"unknown category {t!r}")


@dataclass(frozen=True)
class ParsedPrompt:
    targets: frozenset[str]
    matched_spans: tuple = ()
    unmatched_tokens: tuple = ()


class PromptGrammar:
    """Synonym lexicon + sentence templates loaded from a JSON grammar file."""

    def __init__(self, spec: dict):
        self.categories: dict[str, dict] = spec["categories"]
        self.verbs: list[str] = spec["verbs"]
        self.templates: list[str] = spec["templates"]
        self.fused_templates: list[str] = spec["fused_templates"]
        self.stopwords: frozenset[str] = frozenset(spec["stopwords"])
        missing = set(CATEGORIES) - set(self.categories)
        if missing:
            raise ValueError(f"grammar missing categories: {sorted(missing)}")
        # phrase -> category, for nouns and fused verb forms alike
        self.phrase_map: dict[tuple[str, ...], str] = {}
        for cat, entry in self.categories.items():
            if len(entry["nouns"]) < 3:
                raise ValueError(f"category {cat} needs >= 3 surface forms")
            for phrase in chain(entry["nouns"], entry["fused"]):
                key = tuple(_tokenize(phrase))
                prev = self.phrase_map.get(key)
                if prev is not None and prev != cat:
                    raise ValueError(f"surface form {phrase!r} maps to both {prev} and {cat}")
                self.phrase_map[key] = cat
        self.max_phrase_len = max(len(k) for k in self.phrase_map)
        self.verb_tokens = frozenset(chain.from_iterable(_tokenize(v) for v in self.verbs))

    def canonical(self, category: str) -> str:
        return self.categories[category]["canonical"]


def _tokenize(text: str) -> list[str]:
    return re.findall(r"[a-z0-9]+", text.lower().replace("-", " "))


_DEFAULT: PromptGrammar | None = None


def default_grammar() -> PromptGrammar:
    global _DEFAULT
    if _DEFAULT is None:
        raw = resources.files("prism_forge").joinpath("data/grammar.json").read_text("utf-8")
        _DEFAULT = PromptGrammar(json.loads(raw))
    return _DEFAULT


def _join_list(items: list[str]) -> str:
    if len(items) == 1:
        return items[0]
    if len(items) == 2:
        return f"{items[0]} and {items[1]}"
    return ", ".join(items[:-1]) + f", and {items[-1]}"


def _ordered(targets) -> list[str]:
    return [c for c in CATEGORIES if c in set(targets)]


def render_prompt(
    targets,
    style: str = "fixed",
    rng: np.random.Generator | None = None,
    grammar: PromptGrammar | None = None,
) -> str:
    """Render a prompt naming every target category exactly once.

    ``fixed`` emits the standardized form "remove the effects of x, y, and z"
    with canonical names; ``varied`` samples templates and synonyms.
    """
    g = grammar or default_grammar()
    cats = _ordered(targets)
    if not cats:
        raise ValueError("cannot render a prompt for an empty target set")
    if style == "fixed":
        return "remove the effects of " + _join_list([g.canonical(c) for c in cats])
    if style != "varied":
        raise ValueError(f"unknown prompt style {style!r}")
    if rng is None:
        raise ValueError("varied style requires an rng")
    # fused-verb sentence when every target has a fused form
    fused_ok = all(g.categories[c]["fused"] for c in cats)
    if fused_ok and rng.random() < 0.35:
        tpl = g.fused_templates[rng.integers(len(g.fused_templates))]
        fused = [str(rng.choice(g.categories[c]["fused"])) for c in cats]
        return tpl.format(fused=_join_list(fused))
    tpl = g.templates[rng.integers(len(g.templates))]
    nouns = [str(rng.choice(g.categories[c]["nouns"])) for c in cats]
    verb = str(rng.choice(g.verbs))
    return tpl.format(things=_join_list(nouns), verb=verb)


def parse_prompt(text: str, grammar: PromptGrammar | None = None) -> ParsedPrompt:
    """Recover target categories via case-insensitive longest-match lookup.

    Raises PromptParseError (carrying the unmatched content words) when no
    category surface form occurs in the text.
    """
    g = grammar or default_grammar()
    if not text or not text.strip():
        raise PromptParseError("empty prompt", [])
    tokens = _tokenize(text)
    targets: set[str] = set()
    spans: list[tuple[int, int, str]] = []
    unmatched: list[str] = []
    i = 0
    while i < len(tokens):
        hit = None
        for n in range(min(g.max_phrase_len, len(tokens) - i), 0, -1):
            cat = g.phrase_map.get(tuple(tokens[i : i + n]))
            if cat is not None:
                hit = (n, cat)
                break
        if hit is not None:
            n, cat = hit
            targets.add(cat)
            spans.append((i, i + n, cat))
            i += n
            continue
        tok = tokens[i]
        if tok not in g.stopwords and tok not in g.verb_tokens and not tok.isdigit():
            if tok not in ("effects", "effect", "distortions", "distortion", "artifacts", "artifact", "degradations", "degradation"):
                unmatched.append(tok)
        i += 1
    if not targets:
        raise PromptParseError(
            f"no recognizable distortion terms in {text!r}", unmatched
        )
    return ParsedPrompt(frozenset(targets), tuple(spans), tuple(unmatched))


def make_full(applied, style: str = "fixed", rng: np.random.Generator | None = None) -> RestorationRequest:
    """Full-mode request: remove everything that was applied."""
    targets = frozenset(applied)
    if not targets:
        raise ValueError("applied set is empty")
    return RestorationRequest(targets, "full", render_prompt(targets, style, rng))


def make_partial(applied, rng: np.random.Generator, style: str = "fixed") -> RestorationRequest:
    """Partial-mode request: a uniformly chosen strict non-empty subset."""
    cats = _ordered(applied)
    if len(cats) < 2:
        raise ValueError("partial prompts need >= 2 applied categories")
    subsets = [
        frozenset(s)
        for n in range(1, len(cats))
        for s in combinations(cats, n)
    ]
    targets = subsets[rng.integers(len(subsets))]
    return RestorationRequest(targets, "partial", render_prompt(targets, style, rng))


def make_negative(applied, rng: np.random.Generator, style: str = "fixed") -> RestorationRequest:
    """Negative-mode request: one category that is not present."""
    applied = frozenset(applied)
    complement = [c for c in CATEGORIES if c not in applied]
    if not complement:
        raise ValueError("applied set covers the whole vocabulary")
    targets = frozenset({complement[rng.integers(len(complement))]})
    return RestorationRequest(targets, "negative", render_prompt(targets, style, rng))
