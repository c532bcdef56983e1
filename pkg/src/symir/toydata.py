"""Synthetic desk-scale corpora for training sanity checks and demos.

Each synthetic piece is defined by three independent feature slots (key,
meter, contour) with eight values each; enumerating all combinations gives
exactly 512 unique triplets.  The features show up in both renderings (the
key and meter headers and the note pattern) and the raw text names all
three, so text deterministically describes the music and a held-out split
tests compositional retrieval.
"""

from __future__ import annotations

import numpy as np

from .corpus import Triplet

KEYS = ["C", "G", "D", "A", "E", "B", "F", "Eb"]
METERS = [(2, 4), (3, 4), (4, 4), (6, 8), (9, 8), (12, 8), (5, 4), (7, 8)]

# Contour name -> six scale degrees (offsets from middle C).
CONTOURS = {
    "rising": [0, 2, 4, 5, 7, 9],
    "falling": [9, 7, 5, 4, 2, 0],
    "wave": [0, 4, 2, 5, 4, 7],
    "arch": [0, 4, 9, 9, 4, 0],
    "valley": [9, 4, 0, 0, 4, 9],
    "leaping": [0, 7, 2, 9, 4, 11],
    "droning": [0, 0, 7, 7, 0, 0],
    "zigzag": [0, 5, 2, 7, 4, 9],
}

_ABC_NOTES = ["C", "^C", "D", "^D", "E", "F", "^F", "G", "^G", "A", "^A", "B"]


def _abc_body(degrees) -> str:
    notes = [_ABC_NOTES[d % 12] for d in degrees]
    return " ".join(notes[:3]) + " | " + " ".join(notes[3:]) + " |]"


def make_triplet(key: str, meter: tuple[int, int], contour: str) -> Triplet:
    """Build one synthetic ABC/MTF/text triplet from its three features."""
    numerator, denominator = meter
    degrees = CONTOURS[contour]
    abc = (f"X:1\nL:1/8\nM:{numerator}/{denominator}\nK:{key}\n"
           f"{_abc_body(degrees)}\n")
    lines = [
        "ticks_per_beat 480",
        f"time_signature {numerator} {denominator} 24 8 0",
        f"key_signature {key} 0",
    ]
    for degree in degrees:
        pitch = 60 + degree
        lines.append(f"note_on 0 0 {pitch} 80")
        lines.append(f"note_on 240 0 {pitch} 0")
    lines.append("end_of_track 1")
    mtf = "\n".join(lines) + "\n"
    text = f"a {contour} melody in {key} with {numerator}/{denominator} time"
    return Triplet(abc=abc, mtf=mtf, raw_text=text)


def synthetic_triplet_corpus() -> list[Triplet]:
    """All 512 feature combinations, in deterministic enumeration order."""
    corpus = []
    for key in KEYS:
        for meter in METERS:
            for contour in CONTOURS:
                corpus.append(make_triplet(key, meter, contour))
    return corpus


def split_corpus(corpus, held_out: int, seed: int = 0):
    """Deterministic shuffle, then (train, held_out) split."""
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(corpus))
    items = [corpus[i] for i in order]
    return items[:-held_out], items[-held_out:]


def toy_m3_corpus(size: int = 32) -> list[tuple[str, str]]:
    """A small mixed ABC/MTF corpus of (modality, text) items."""
    triplets = synthetic_triplet_corpus()
    step = max(1, len(triplets) // size)
    chosen = triplets[::step][:size]
    items = []
    for index, triplet in enumerate(chosen):
        if index % 2 == 0:
            items.append(("abc", triplet.abc))
        else:
            items.append(("mtf", triplet.mtf))
    return items
