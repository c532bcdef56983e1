"""Pluggable language identification.

Two implementations ship with the toolkit: a character n-gram naive-Bayes
classifier trained on a tiny bundled corpus (the desk default), and an
exact-match stub that reads a ``##code##`` tag from the text, used to make
refinery tests fully deterministic.  Production pipelines are expected to
plug in a real identifier behind the same interface.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from importlib import resources as importlib_resources
from typing import Protocol


class EmptyText(Exception):
    pass


@dataclass(frozen=True)
class LanguagePrediction:
    language: str
    confidence: float


class LanguageIdentifier(Protocol):
    def detect(self, text: str) -> LanguagePrediction: ...


_STUB_TAG_RE = re.compile(r"##([\w-]+)##")


class StubLanguageIdentifier:
    """Reads the language from a ``##code##`` tag; untagged text is ``und``."""

    def detect(self, text: str) -> LanguagePrediction:
        if not text.strip():
            raise EmptyText("cannot identify an empty text")
        match = _STUB_TAG_RE.search(text)
        if match:
            return LanguagePrediction(match.group(1), 1.0)
        return LanguagePrediction("und", 0.0)


def _char_ngrams(text: str, orders=(1, 2, 3)):
    text = " ".join(text.lower().split())
    for order in orders:
        for start in range(len(text) - order + 1):
            yield text[start:start + order]


class NgramLanguageIdentifier:
    """Character n-gram naive Bayes with add-one smoothing."""

    def __init__(self, counts: dict[str, dict[str, int]], orders=(1, 2, 3)):
        self.orders = tuple(orders)
        self.counts = counts
        self.totals = {lang: sum(grams.values()) for lang, grams in counts.items()}
        vocabulary = set()
        for grams in counts.values():
            vocabulary.update(grams)
        self.vocab_size = max(len(vocabulary), 1)

    @classmethod
    def train(cls, samples: dict[str, list[str]], orders=(1, 2, 3)):
        counts: dict[str, dict[str, int]] = {}
        for lang, texts in samples.items():
            grams: dict[str, int] = {}
            for text in texts:
                for gram in _char_ngrams(text, orders):
                    grams[gram] = grams.get(gram, 0) + 1
            counts[lang] = grams
        return cls(counts, orders)

    def detect(self, text: str) -> LanguagePrediction:
        if not text.strip():
            raise EmptyText("cannot identify an empty text")
        log_scores = {}
        for lang, grams in self.counts.items():
            total = self.totals[lang] + self.vocab_size
            score = 0.0
            for gram in _char_ngrams(text, self.orders):
                score += math.log((grams.get(gram, 0) + 1) / total)
            log_scores[lang] = score
        best = max(log_scores, key=lambda lang: (log_scores[lang], lang))
        peak = log_scores[best]
        normalizer = sum(math.exp(s - peak) for s in log_scores.values())
        return LanguagePrediction(best, 1.0 / normalizer)


_BUNDLED: NgramLanguageIdentifier | None = None


def bundled_corpus() -> dict[str, list[str]]:
    payload = importlib_resources.files("symir.resources").joinpath(
        "langid_corpus.json").read_text(encoding="utf-8")
    return json.loads(payload)


def bundled_identifier() -> NgramLanguageIdentifier:
    """The n-gram identifier trained on the bundled corpus (cached)."""
    global _BUNDLED
    if _BUNDLED is None:
        _BUNDLED = NgramLanguageIdentifier.train(bundled_corpus())
    return _BUNDLED


def detect_language(text: str,
                    identifier: LanguageIdentifier | None = None) -> LanguagePrediction:
    """Identify the language of a text; deterministic for a fixed model."""
    if identifier is None:
        identifier = bundled_identifier()
    return identifier.detect(text)
