"""Stochastic data-selection policies for contrastive training.

Per sample: the music modality is a fair coin between ABC and MTF,
instrument information is stripped 90% of the time, the text source is
drawn at 50/25/25 over raw metadata and the two LLM summary kinds (weights
renormalize over whichever sources the triplet actually has), raw text goes
through field dropout, and token sequences longer than the limit keep the
first, last, or a random window with equal probability.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .abc_notation import strip_instruments
from .corpus import Triplet
from .tokenizers import TextTokenizer


class NoTextAvailable(Exception):
    pass


@dataclass(frozen=True)
class SamplerPolicy:
    raw_prob: float = 0.50
    llm_en_prob: float = 0.25
    llm_nen_prob: float = 0.25
    instrument_keep_prob: float = 0.10
    abc_prob: float = 0.50
    text_dropout_enabled: bool = True
    max_text_tokens: int = 128

    def __post_init__(self):
        total = self.raw_prob + self.llm_en_prob + self.llm_nen_prob
        if abs(total - 1.0) > 1e-9:
            raise ValueError("text source probabilities must sum to 1")


@dataclass
class SampledView:
    music_text: str
    modality: str  # "abc" | "mtf"
    text_tokens: list[int]
    text_source: str  # "raw" | "llm_en" | "llm_nen"
    instruments_stripped: bool


def text_dropout(fields, rng: np.random.Generator, enabled: bool = True,
                 separator: str = "\n") -> str:
    """Keep each metadata field with probability 1/2, renormalized so the
    empty outcome never occurs (the draw is repeated until at least one field
    survives, i.e. the kept subset is uniform over non-empty subsets).  Kept
    fields are concatenated in random order.

    With dropout disabled, all fields are joined in declaration order.
    """
    fields = list(fields)
    if not fields:
        raise ValueError("text_dropout requires at least one field")
    if not enabled or len(fields) == 1:
        return separator.join(fields)
    while True:
        kept = [f for f in fields if rng.random() < 0.5]
        if kept:
            break
    order = rng.permutation(len(kept))
    return separator.join(kept[i] for i in order)


def truncate_tokens(tokens: list[int], max_tokens: int,
                    rng: np.random.Generator) -> list[int]:
    """First / last / random contiguous window, each with probability 1/3.

    Sequences within the limit pass through untouched (no draw consumed).
    """
    if len(tokens) <= max_tokens:
        return list(tokens)
    branch = int(rng.integers(3))
    if branch == 0:
        return list(tokens[:max_tokens])
    if branch == 1:
        return list(tokens[-max_tokens:])
    start = int(rng.integers(0, len(tokens) - max_tokens + 1))
    return list(tokens[start:start + max_tokens])


def sample_view(triplet: Triplet, policy: SamplerPolicy,
                rng: np.random.Generator, tokenizer: TextTokenizer) -> SampledView:
    """Draw one training view (music text + text tokens) from a triplet."""
    modality = "abc" if rng.random() < policy.abc_prob else "mtf"
    music_text = triplet.abc if modality == "abc" else triplet.mtf

    stripped = rng.random() >= policy.instrument_keep_prob
    if stripped:
        music_text = strip_instruments(music_text, modality)

    sources = []
    if triplet.raw_text is not None:
        sources.append(("raw", policy.raw_prob))
    if triplet.llm_en is not None:
        sources.append(("llm_en", policy.llm_en_prob))
    if triplet.llm_nen is not None:
        sources.append(("llm_nen", policy.llm_nen_prob))
    if not sources:
        raise NoTextAvailable("triplet has no text fields")
    weights = np.array([w for _, w in sources])
    weights = weights / weights.sum()
    choice = int(rng.choice(len(sources), p=weights))
    source = sources[choice][0]

    if source == "raw":
        fields = [f for f in triplet.raw_text.split("\n") if f.strip()]
        if not fields:
            fields = [triplet.raw_text]
        text = text_dropout(fields, rng, enabled=policy.text_dropout_enabled)
    elif source == "llm_en":
        text = triplet.llm_en
    else:
        text = triplet.llm_nen

    tokens = truncate_tokens(tokenizer.encode(text), policy.max_text_tokens, rng)
    return SampledView(music_text=music_text, modality=modality,
                       text_tokens=tokens, text_source=source,
                       instruments_stripped=stripped)
