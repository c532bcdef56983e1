"""Bar patching: segmenting ABC/MTF text into patches, truncation, and the
masked-modeling corruption scheme.

A patch holds at most 64 characters and a sequence at most 512 patches.
ABC text yields one patch per header line and one per bar segment; MTF text
yields the type-merged groups produced by the MTF codec.  All randomness is
injected through an explicit numpy Generator so every stochastic policy is
reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import mtf as mtf_codec
from .abc_notation import split_bars

PATCH_CHAR_CAPACITY = 64
MAX_PATCHES = 512

# Byte-level character vocabulary plus reserved control ids.
PAD_ID = 256
MASK_ID = 257
BOS_ID = 258
EOS_ID = 259
SEP_ID = 260
CHAR_VOCAB_SIZE = 261

_PATCH_KINDS = ("header", "bar", "mtf-group", "special")


@dataclass(frozen=True)
class Patch:
    text: str
    kind: str

    def __post_init__(self):
        if self.kind not in _PATCH_KINDS:
            raise ValueError(f"unknown patch kind {self.kind!r}")
        if self.kind != "special" and len(self.text) > PATCH_CHAR_CAPACITY:
            raise ValueError(f"patch longer than {PATCH_CHAR_CAPACITY} chars")

    def __len__(self):
        return len(self.text)


MASK_PATCH = Patch("", "special")


@dataclass
class PatchSequence:
    patches: list[Patch]
    source_modality: str  # "abc" | "mtf"

    def __post_init__(self):
        if self.source_modality not in ("abc", "mtf"):
            raise ValueError(f"unknown modality {self.source_modality!r}")

    def __len__(self):
        return len(self.patches)

    def __iter__(self):
        return iter(self.patches)

    def __getitem__(self, index):
        return self.patches[index]

    def text(self) -> str:
        return "".join(p.text for p in self.patches)


def _extend_chunked(patches: list[Patch], text: str, kind: str):
    if len(text) <= PATCH_CHAR_CAPACITY:
        patches.append(Patch(text, kind))
        return
    for start in range(0, len(text), PATCH_CHAR_CAPACITY):
        patches.append(Patch(text[start:start + PATCH_CHAR_CAPACITY], kind))


def patchize_abc(text: str) -> PatchSequence:
    """Segment interleaved ABC text into patches.

    Header/field lines become one patch each; body lines split into one
    patch per bar segment.  Units longer than 64 characters split at hard
    64-character boundaries.  Patch texts keep their newlines, so
    concatenating all patches reproduces the input exactly.
    """
    patches: list[Patch] = []
    for line in text.splitlines(keepends=True):
        bare = line.rstrip("\n")
        if _looks_like_field(bare):
            _extend_chunked(patches, line, "header")
        else:
            for segment in split_bars(line):
                _extend_chunked(patches, segment, "bar")
    return PatchSequence(patches, "abc")


def _looks_like_field(line: str) -> bool:
    if line.startswith("%"):
        return True
    return len(line) >= 2 and line[1] == ":" and line[0].isalpha()


def patchize_mtf(text: str) -> PatchSequence:
    """Segment MTF text into the merged groups of the MTF codec."""
    doc = mtf_codec.parse_mtf(text)
    groups = mtf_codec.merge_lines(doc, PATCH_CHAR_CAPACITY)
    return PatchSequence([Patch(g, "mtf-group") for g in groups], "mtf")


def truncate(seq: PatchSequence, max_patches: int = MAX_PATCHES,
             rng: np.random.Generator | None = None) -> PatchSequence:
    """Truncate to a contiguous window of at most ``max_patches`` patches.

    Over-long sequences keep the start, middle, or end window with equal
    probability: start is ``[0, max)``, end is ``[len-max, len)``, and middle
    starts uniformly in ``[1, len-max-1]``.  When the sequence is exactly one
    patch over the limit the middle range is empty and start index 1 is used.
    """
    n = len(seq)
    if n <= max_patches:
        return seq
    if rng is None:
        raise ValueError("rng required to truncate an over-long sequence")
    branch = int(rng.integers(3))
    if branch == 0:
        start = 0
    elif branch == 1:
        start = (int(rng.integers(1, n - max_patches))
                 if n - max_patches >= 2 else 1)
    else:
        start = n - max_patches
    window = seq.patches[start:start + max_patches]
    return PatchSequence(window, seq.source_modality)


@dataclass
class CorruptionPlan:
    """Per-patch outcome of the corruption draw.

    Actions are ``keep`` (not selected) or, for selected patches, ``mask``,
    ``shuffle``, or ``unchanged``.  Targets pair each selected index with the
    original patch so the decoder can reconstruct it.
    """

    actions: list[str]
    targets: list[tuple[int, Patch]] = field(default_factory=list)

    @property
    def selected_indices(self) -> list[int]:
        return [i for i, a in enumerate(self.actions) if a != "keep"]


def corrupt(seq: PatchSequence, rng: np.random.Generator,
            selection_ratio: float = 0.45, mask_fraction: float = 0.8,
            shuffle_fraction: float = 0.1) -> tuple[PatchSequence, CorruptionPlan]:
    """Apply the masked-modeling corruption scheme.

    Each patch is independently selected with probability 0.45; a selected
    patch is replaced by the MASK patch with probability 0.8, has its
    characters uniformly permuted in place with probability 0.1, and is left
    unchanged otherwise.  The patch count never changes.
    """
    if len(seq) == 0:
        raise ValueError("cannot corrupt an empty sequence")
    corrupted: list[Patch] = []
    actions: list[str] = []
    targets: list[tuple[int, Patch]] = []
    for index, patch in enumerate(seq):
        if rng.random() >= selection_ratio:
            corrupted.append(patch)
            actions.append("keep")
            continue
        targets.append((index, patch))
        draw = rng.random()
        if draw < mask_fraction:
            corrupted.append(MASK_PATCH)
            actions.append("mask")
        elif draw < mask_fraction + shuffle_fraction:
            order = rng.permutation(len(patch.text))
            shuffled = "".join(patch.text[i] for i in order)
            corrupted.append(Patch(shuffled, patch.kind))
            actions.append("shuffle")
        else:
            corrupted.append(patch)
            actions.append("unchanged")
    plan = CorruptionPlan(actions=actions, targets=targets)
    return PatchSequence(corrupted, seq.source_modality), plan


def encode_chars(patch: Patch) -> list[int]:
    """Byte-level ids for a patch; the MASK patch encodes as a single MASK id.

    Multibyte characters encode as their UTF-8 byte sequence, so a 64-char
    patch can yield more than 64 ids; the model embedding truncates to its
    64 slots in that case.
    """
    if patch.kind == "special":
        return [MASK_ID]
    return list(patch.text.encode("utf-8"))


def decode_text(ids) -> str:
    """Inverse of encode_chars for byte ids; reserved ids are dropped."""
    return bytes(i for i in ids if i < 256).decode("utf-8")
